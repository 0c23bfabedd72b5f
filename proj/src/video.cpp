// SPDX-License-Identifier: Apache-2.0
#include "cricbench/video.hpp"

#include <filesystem>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

namespace cricbench {

RawClip decode_video(const std::string& path) {
  if (!std::filesystem::is_regular_file(path))
    throw DecodeError("cannot open video: " + path);
  cv::VideoCapture cap(path);
  if (!cap.isOpened()) throw DecodeError("cannot open video: " + path);

  RawClip clip;
  clip.source_path = path;
  clip.fps = cap.get(cv::CAP_PROP_FPS);
  cv::Mat bgr, rgb;
  while (cap.read(bgr)) {
    if (bgr.empty()) break;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    if (clip.num_frames == 0) {
      clip.height = rgb.rows;
      clip.width = rgb.cols;
    } else if (rgb.rows != clip.height || rgb.cols != clip.width) {
      throw DecodeError("frame size changes mid-stream: " + path);
    }
    std::size_t fsz = static_cast<std::size_t>(clip.height) * clip.width * 3;
    std::size_t off = clip.frames.size();
    clip.frames.resize(off + fsz);
    if (rgb.isContinuous()) {
      std::copy_n(rgb.data, fsz, clip.frames.data() + off);
    } else {
      for (long y = 0; y < clip.height; ++y)
        std::copy_n(rgb.ptr<std::uint8_t>(static_cast<int>(y)), clip.width * 3,
                    clip.frames.data() + off + y * clip.width * 3);
    }
    ++clip.num_frames;
  }
  if (clip.num_frames == 0) throw EmptyVideoError("no decodable frames in: " + path);
  return clip;
}

void write_video(const std::string& path, const RawClip& clip) {
  cv::VideoWriter writer(path, cv::VideoWriter::fourcc('M', 'J', 'P', 'G'),
                         clip.fps > 0 ? clip.fps : 25.0,
                         cv::Size(static_cast<int>(clip.width), static_cast<int>(clip.height)));
  if (!writer.isOpened()) throw IoError("cannot open video for writing: " + path);
  cv::Mat rgb(static_cast<int>(clip.height), static_cast<int>(clip.width), CV_8UC3), bgr;
  for (long f = 0; f < clip.num_frames; ++f) {
    std::copy_n(clip.frame(f), clip.height * clip.width * 3, rgb.data);
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    writer.write(bgr);
  }
}

}  // namespace cricbench
