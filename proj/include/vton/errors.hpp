#pragma once

#include <stdexcept>
#include <string>

namespace vton {

/// Base for every error raised by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "Error"; }
};

#define VTON_DECLARE_ERROR(Name)                                        \
    class Name : public Error {                                         \
    public:                                                             \
        using Error::Error;                                             \
        const char* kind() const noexcept override { return #Name; }    \
    }

// data_model
VTON_DECLARE_ERROR(MissingFile);
VTON_DECLARE_ERROR(LabelSetViolation);
VTON_DECLARE_ERROR(StoreCorrupt);
VTON_DECLARE_ERROR(IndexOutOfRange);

// mask_engine
VTON_DECLARE_ERROR(EmptyRegion);
VTON_DECLARE_ERROR(PoseIncomplete);
VTON_DECLARE_ERROR(ShapeMismatch);
VTON_DECLARE_ERROR(FineNotInCoarse);
VTON_DECLARE_ERROR(IndivisibleShape);

// captioner
VTON_DECLARE_ERROR(SchemaMismatch);
VTON_DECLARE_ERROR(ResponseSchemaViolation);
VTON_DECLARE_ERROR(TransportError);
VTON_DECLARE_ERROR(TokenBudgetExceeded);

// diffusion_core
VTON_DECLARE_ERROR(RangeViolation);
VTON_DECLARE_ERROR(TimestepOutOfRange);
VTON_DECLARE_ERROR(LayerShapeMismatch);
VTON_DECLARE_ERROR(NonFiniteLoss);
VTON_DECLARE_ERROR(CheckpointError);

// pmg_inference
VTON_DECLARE_ERROR(SegmenterShapeMismatch);

// eval_harness
VTON_DECLARE_ERROR(EmptyInput);
VTON_DECLARE_ERROR(LengthMismatch);

// cli
VTON_DECLARE_ERROR(ConfigError);

#undef VTON_DECLARE_ERROR

}  // namespace vton
