"""64x64 checkerboard (8-bit, 6-pixel squares) shrunk to 32x32 with OpenCV's bilinear resampler."""
import cv2
import numpy as np

from common import emit

y, x = np.mgrid[0:64, 0:64]
board = np.where(((y // 6) + (x // 6)) % 2 == 0, 230, 20).astype(np.uint8)
board[::7, :] = 128  # break the symmetry a little
small = cv2.resize(board.astype(np.float64) / 255.0, (32, 32), interpolation=cv2.INTER_LINEAR)
emit("bilinear", {"source": board.tolist(), "expected": small.tolist()})
