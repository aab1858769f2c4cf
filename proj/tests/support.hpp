#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "vton/captioner.hpp"
#include "vton/diffusion/checkpoint.hpp"
#include "vton/mask.hpp"
#include "vton/synthetic.hpp"

namespace vton::testing {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("vton-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline Plane<std::uint8_t> random_bits(std::mt19937_64& rng, int h, int w, double density) {
    std::bernoulli_distribution on(density);
    Plane<std::uint8_t> p(Size{h, w}, 0);
    for (auto& v : p.values()) v = on(rng) ? 1 : 0;
    return p;
}

/// Coarse mask = random rectangle plus speckle; fine mask = random subset of it.
inline std::pair<Mask, Mask> random_fine_coarse(std::mt19937_64& rng, int h, int w) {
    std::uniform_int_distribution<int> ry(0, h - 1), rx(0, w - 1);
    int t = ry(rng), b = ry(rng), l = rx(rng), r = rx(rng);
    if (t > b) std::swap(t, b);
    if (l > r) std::swap(l, r);
    Plane<std::uint8_t> coarse = random_bits(rng, h, w, 0.1);
    for (int y = t; y <= b; ++y)
        for (int x = l; x <= r; ++x) coarse(y, x) = 1;
    Plane<std::uint8_t> fine(Size{h, w}, 0);
    std::bernoulli_distribution keep(0.3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) fine(y, x) = coarse(y, x) && keep(rng) ? 1 : 0;
    return {Mask(std::move(fine), MaskKind::fine), Mask(std::move(coarse), MaskKind::coarse)};
}

/// Independent morphology oracle: n rounds of neighbourhood max over the element, then AND.
inline Plane<std::uint8_t> oracle_dilate_and(const Plane<std::uint8_t>& fine, const Plane<std::uint8_t>& coarse,
                                             const Plane<std::uint8_t>& element, int n) {
    const int h = fine.height(), w = fine.width(), r = element.height() / 2;
    Plane<std::uint8_t> cur = fine;
    for (int it = 0; it < n; ++it) {
        Plane<std::uint8_t> next(Size{h, w}, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                std::uint8_t best = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        if (!element(dy + r, dx + r)) continue;
                        const int sy = y - dy, sx = x - dx;
                        if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                        best = std::max(best, cur(sy, sx));
                    }
                next(y, x) = best;
            }
        cur = std::move(next);
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) cur(y, x) = cur(y, x) && coarse(y, x) ? 1 : 0;
    return cur;
}

inline synthetic::GeneratedSample make_sample(std::uint64_t seed, Category category = Category::upper_body,
                                              const std::string& tucking = {}) {
    synthetic::Options o;
    o.category = category;
    o.tucking = tucking;
    return synthetic::generate("s" + std::to_string(seed), seed, o);
}

inline CaptionRecord record(const std::string& id, Subject subject, std::map<std::string, std::string> captions) {
    return CaptionRecord{id, subject, std::move(captions), "mock", "1970-01-01T00:00:00Z"};
}

/// Prompts rendered from the generator's ground-truth attributes.
inline PromptPair prompts_for(const synthetic::GeneratedSample& g,
                              const std::map<std::string, std::string>& overrides = {}) {
    const Category c = g.sample.category;
    return render_main_prompt(default_schema(Subject::person, c),
                              record(g.sample.person_id, Subject::person, g.attributes.person),
                              default_schema(Subject::clothing, c),
                              record(g.sample.clothing_id, Subject::clothing, g.attributes.clothing), overrides);
}

}  // namespace vton::testing
