#!/usr/bin/env python3
# Copyright 2026 The simjudge Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Write the frame nearest to a timestamp as an image.

Usage: frame_at.py <video> <seconds> <output_image>
"""

import sys

import cv2


def main() -> int:
    if len(sys.argv) != 4:
        print("usage: frame_at.py <video> <seconds> <output_image>", file=sys.stderr)
        return 2
    video, seconds, output = sys.argv[1], float(sys.argv[2]), sys.argv[3]
    cap = cv2.VideoCapture(video)
    if not cap.isOpened():
        print(f"cannot open {video}", file=sys.stderr)
        return 1
    frames = int(cap.get(cv2.CAP_PROP_FRAME_COUNT) or 0)
    fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    index = int(round(seconds * fps)) if fps > 0 else 0
    if frames > 0:
        index = max(0, min(index, frames - 1))
    cap.set(cv2.CAP_PROP_POS_FRAMES, index)
    ok, frame = cap.read()
    if not ok:
        # Seeking can fail on sparse keyframes; fall back to a linear scan.
        cap.set(cv2.CAP_PROP_POS_FRAMES, 0)
        ok, frame, last = True, None, None
        for _ in range(index + 1):
            ok, frame = cap.read()
            if not ok:
                break
            last = frame
        frame = last
        ok = frame is not None
    if not ok or not cv2.imwrite(output, frame):
        print(f"no frame at {seconds}s", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
