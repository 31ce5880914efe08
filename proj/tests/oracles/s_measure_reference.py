"""Structure-measure reference in numpy, mirroring the MATLAB routine.

Prints the score of each fixed mask pair below; the values are frozen into
tests/unit/test_reward.cpp. Rerun with `python3 s_measure_reference.py`.
"""

import numpy as np

EPS = np.finfo(np.float64).eps

CASES = [
    ("corner_blob", ["1100", "1100", "0000", "0000"], ["1110", "1100", "0000", "0000"]),
    ("shifted_bar", ["00000", "11111", "00000", "00000", "00000"], ["00000", "00000", "11111", "00000", "00000"]),
    ("checker_vs_half", ["1010", "0101", "1010", "0101"], ["1100", "1100", "1100", "1100"]),
    ("single_pixel_hit", ["000", "010", "000"], ["000", "010", "000"]),
    ("single_pixel_miss", ["100", "000", "000"], ["000", "010", "000"]),
    ("ring", ["111111", "100001", "100001", "100001", "100001", "111111"],
     ["000000", "011110", "011110", "011110", "011110", "000000"]),
    ("wide", ["0011100", "0111110", "0011100"], ["0001100", "0011110", "0001100"]),
    ("gt_empty", ["0110", "0000"], ["0000", "0000"]),
    ("gt_full", ["0110", "0000"], ["1111", "1111"]),
    ("pred_empty", ["0000", "0000", "0000"], ["0110", "0110", "0000"]),
]


def grid(rows):
    return np.array([[float(c) for c in r] for r in rows])


def obj(pred, gt):
    vals = pred[gt]
    x = vals.mean()
    sigma = vals.std(ddof=1) if vals.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + EPS)


def s_object(pred, gt):
    g = gt > 0.5
    fg = obj(pred, g)
    bg = obj(1.0 - pred, ~g)
    u = gt.mean()
    return u * fg + (1 - u) * bg


def ssim(pred, gt):
    n = pred.size
    x, y = pred.mean(), gt.mean()
    sx2 = ((pred - x) ** 2).sum() / (n - 1 + EPS)
    sy2 = ((gt - y) ** 2).sum() / (n - 1 + EPS)
    sxy = ((pred - x) * (gt - y)).sum() / (n - 1 + EPS)
    a = 4 * x * y * sxy
    b = (x * x + y * y) * (sx2 + sy2)
    if a != 0:
        return a / (b + EPS)
    return 1.0 if b == 0 else 0.0


def matlab_round(v):
    return int(np.floor(v + 0.5)) if v >= 0 else -int(np.floor(-v + 0.5))


def s_region(pred, gt):
    rows, cols = gt.shape
    total = gt.sum()
    if total == 0:
        X, Y = matlab_round(cols / 2), matlab_round(rows / 2)
    else:
        X = matlab_round((gt.sum(axis=0) * np.arange(1, cols + 1)).sum() / total)
        Y = matlab_round((gt.sum(axis=1) * np.arange(1, rows + 1)).sum() / total)
    area = rows * cols
    w1 = X * Y / area
    w2 = (cols - X) * Y / area
    w3 = X * (rows - Y) / area
    w4 = 1.0 - w1 - w2 - w3
    q = 0.0
    for w, rs, cs in [(w1, slice(0, Y), slice(0, X)), (w2, slice(0, Y), slice(X, cols)),
                      (w3, slice(Y, rows), slice(0, X)), (w4, slice(Y, rows), slice(X, cols))]:
        p, g = pred[rs, cs], gt[rs, cs]
        if p.size:
            q += w * ssim(p, g)
    return q


def s_measure(pred, gt):
    y = gt.mean()
    if y == 0:
        return 1.0 - pred.mean()
    if y == 1:
        return pred.mean()
    q = 0.5 * s_object(pred, gt) + 0.5 * s_region(pred, gt)
    return max(q, 0.0)


if __name__ == "__main__":
    for name, p, g in CASES:
        print(f"{name} {s_measure(grid(p), grid(g)):.17g}")
