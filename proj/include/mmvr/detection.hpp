#pragma once

namespace mmvr {

/// One detector output. The box is normalized to the image extent with
/// (x, y) at its top-left corner.
struct Detection {
  double x = 0, y = 0, w = 0, h = 0;
  int class_id = 0;
  double confidence = 0;
  int cell = 0;
};

}  // namespace mmvr
