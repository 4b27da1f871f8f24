#include "fundus/geometry.hpp"

#include <vector>

namespace fundus::geometry {

BinaryMask largest_component(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    std::vector<int> label(mask.size(), 0);
    std::vector<std::size_t> stack;
    int best_label = 0;
    std::size_t best_size = 0;
    int next = 0;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask.data[start] || label[start]) continue;
        ++next;
        std::size_t size = 0;
        label[start] = next;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++size;
            const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
            auto visit = [&](int nx, int ny) {
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) return;
                const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
                if (mask.data[q] && !label[q]) {
                    label[q] = next;
                    stack.push_back(q);
                }
            };
            visit(x - 1, y);
            visit(x + 1, y);
            visit(x, y - 1);
            visit(x, y + 1);
        }
        if (size > best_size) {
            best_size = size;
            best_label = next;
        }
    }
    BinaryMask out(w, h);
    if (best_label == 0) return out;
    for (std::size_t p = 0; p < mask.size(); ++p) out.data[p] = label[p] == best_label ? 1 : 0;
    return out;
}

}  // namespace fundus::geometry
