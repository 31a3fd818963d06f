// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "air/tensor/ops.hpp"
#include "kernels.hpp"

namespace air {

Tensor reshape(const Tensor& a, const Shape& shape) {
  Shape target = shape;
  const auto inferred = std::count(target.begin(), target.end(), -1);
  if (inferred > 1) {
    throw ShapeError("reshape: more than one inferred extent in " + to_string(shape));
  }
  if (inferred == 1) {
    std::int64_t known = 1;
    for (auto d : target) {
      if (d != -1) known *= d;
    }
    if (known == 0 || a.numel() % known != 0) {
      throw ShapeError("reshape: cannot infer extent of " + to_string(shape) + " from " + to_string(a.shape()));
    }
    *std::find(target.begin(), target.end(), -1) = a.numel() / known;
  }
  if (numel(target) != a.numel()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  }
  Tensor out = make_tensor(target, a.dtype(), a.impl()->data);
  return record(out, "reshape", {a}, [s = a.shape()](const Tensor& g) {
    return std::vector<Tensor>{make_tensor(s, g.dtype(), g.impl()->data)};
  });
}

Tensor permute(const Tensor& a, const std::vector<int>& dims) {
  const int r = a.rank();
  if (static_cast<int>(dims.size()) != r) {
    throw ShapeError("permute: " + std::to_string(dims.size()) + " axes for shape " + to_string(a.shape()));
  }
  std::vector<int> seen(dims.begin(), dims.end());
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < r; ++i) {
    if (seen[static_cast<std::size_t>(i)] != i) {
      throw ShapeError("permute: axes are not a permutation");
    }
  }
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<std::int64_t> in_strides(static_cast<std::size_t>(r));
  {
    std::int64_t s = 1;
    for (int i = r - 1; i >= 0; --i) {
      in_strides[static_cast<std::size_t>(i)] = s;
      s *= a.shape()[static_cast<std::size_t>(i)];
    }
  }
  std::vector<std::int64_t> gather(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    out_shape[static_cast<std::size_t>(i)] = a.shape()[static_cast<std::size_t>(dims[static_cast<std::size_t>(i)])];
    gather[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(dims[static_cast<std::size_t>(i)])];
  }
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto src = a.data<T>();
    auto dst = out.mutable_data<T>();
    const std::int64_t n = out.numel();
    if (n == 0) return;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
    std::int64_t off = 0;
    const std::int64_t inner = out_shape.back();
    const std::int64_t inner_stride = gather.back();
    for (std::int64_t o = 0; o < n; o += inner) {
      for (std::int64_t j = 0; j < inner; ++j) dst[static_cast<std::size_t>(o + j)] = src[static_cast<std::size_t>(off + j * inner_stride)];
      for (int ax = r - 2; ax >= 0; --ax) {
        const auto u = static_cast<std::size_t>(ax);
        ++idx[u];
        off += gather[u];
        if (idx[u] < out_shape[u]) break;
        off -= gather[u] * idx[u];
        idx[u] = 0;
      }
    }
  });
  std::vector<int> inverse(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) inverse[static_cast<std::size_t>(dims[static_cast<std::size_t>(i)])] = i;
  return record(out, "permute", {a}, [inverse](const Tensor& g) { return std::vector<Tensor>{permute(g, inverse)}; });
}

Tensor transpose(const Tensor& a) {
  detail::require_rank("transpose", a, 2);
  return permute(a, {1, 0});
}

Tensor depth_to_space(const Tensor& x, int factor) {
  detail::require_rank("depth_to_space", x, 4);
  const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t f = factor;
  if (f < 1 || cin % (f * f) != 0) {
    throw ShapeError("depth_to_space: " + std::to_string(cin) + " channels not divisible by factor² = " +
                     std::to_string(f * f));
  }
  const std::int64_t c = cin / (f * f);
  // Expressed as reshape + permute so the backward pass comes for free:
  // [N, C, f, f, H, W] -> [N, C, H, f, W, f].
  Tensor t = reshape(x, {n, c, f, f, h, w});
  t = permute(t, {0, 1, 4, 2, 5, 3});
  return reshape(t, {n, c, h * f, w * f});
}

}  // namespace air
