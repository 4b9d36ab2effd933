"""PSNR / SSIM and the train/test evaluation table."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])


class ScaleMismatchError(ValueError):
    pass


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if max_val <= 0:
        raise ValueError("max_val must be positive")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(max_val ** 2 / mse))


def to_luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ LUMA
    if img.ndim == 3 and img.shape[-1] == 1:
        return img[..., 0]
    if img.ndim != 2:
        raise ValueError(f"expected an HxW or HxWx3 image, got shape {img.shape}")
    return img


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    patches = np.lib.stride_tricks.sliding_window_view(img, window.shape)
    return np.tensordot(patches, window, axes=([2, 3], [0, 1]))


def ssim(a: np.ndarray, b: np.ndarray, window_size: int = 11, sigma: float = 1.5,
         data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over all window positions that fit inside the image.

    RGB images are reduced to BT.601 luma first.
    """
    a, b = to_luma(a), to_luma(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < window_size:
        raise ValueError(f"image {a.shape} is smaller than the {window_size}x{window_size} window")
    w = gaussian_window(window_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# -- aggregation -----------------------------------------------------------

@dataclass
class SplitStats:
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    count: int
    psnr_inf_count: int = 0


def _mean_std(values) -> tuple[float, float]:
    values = [float(v) for v in values]
    if not values:
        return math.nan, math.nan
    n = len(values)
    mean = math.fsum(values) / n
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / n)


def summarize(psnrs, ssims) -> SplitStats:
    finite = [p for p in psnrs if math.isfinite(p)]
    pm, ps = _mean_std(finite)
    sm, ss = _mean_std(ssims)
    return SplitStats(pm, ps, sm, ss, count=len(ssims), psnr_inf_count=len(psnrs) - len(finite))


@dataclass
class MetricReport:
    method: str
    encoder: str
    scale: int
    splits: dict[str, SplitStats] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def row(self) -> dict:
        out = {"method": self.method}
        for metric in ("psnr", "ssim"):
            for split, label in (("train", "train"), ("test", "test")):
                s = self.splits.get(split)
                out[f"{metric}_{label}"] = _fmt(s, metric)
        out["scale"] = self.scale
        out["note"] = ";".join(self.flags)
        return out


def _fmt(stats: SplitStats | None, metric: str) -> str:
    if stats is None:
        return "-"
    if metric == "psnr":
        if math.isnan(stats.psnr_mean):
            return "inf" if stats.psnr_inf_count else "-"
        return f"{stats.psnr_mean:.1f} ± {stats.psnr_std:.1f}"
    return f"{stats.ssim_mean:.4f} ± {stats.ssim_std:.4f}"


TABLE_COLUMNS = ("method", "psnr_train", "psnr_test", "ssim_train", "ssim_test")


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    cols = TABLE_COLUMNS + ("scale", "note", "psnr_inf_train", "psnr_inf_test", "n_train", "n_test")
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        row = r.row()
        for split in ("train", "test"):
            s = r.splits.get(split)
            row[f"psnr_inf_{split}"] = s.psnr_inf_count if s else 0
            row[f"n_{split}"] = s.count if s else 0
        writer.writerow(row)
    return buf.getvalue()


def reports_to_table(reports) -> str:
    """Fixed-width comparison table, one row per method."""
    rows = [r.row() for r in reports]
    header = ["Method", "PSNR train", "PSNR test", "SSIM train", "SSIM test"]
    body = [[r["method"] + (f" [{r['note']}]" if r["note"] else "")] +
            [r[c] for c in TABLE_COLUMNS[1:]] for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    line = "+".join("-" * (w + 2) for w in widths)
    fmt = lambda cells: "|".join(f" {str(c):<{w}} " for c, w in zip(cells, widths))  # noqa: E731
    return "\n".join([fmt(header), line] + [fmt(b) for b in body]) + "\n"


# -- evaluation ------------------------------------------------------------

def sample_pairs(episodes, n_samples: int, seed: int) -> list[tuple[int, int]]:
    """Uniformly chosen (episode, step) pairs; all pairs when there are few enough."""
    index = [(e, i) for e, ep in enumerate(episodes) for i in range(len(ep.frames))]
    if not index:
        raise ValueError("cannot evaluate on an empty split")
    if n_samples >= len(index):
        return index
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE7A1]))
    picks = np.sort(rng.choice(len(index), size=n_samples, replace=False))
    return [index[k] for k in picks]


def _downsample_image(img: np.ndarray, size: int) -> np.ndarray:
    h = img.shape[0]
    if h == size:
        return img
    f = h // size
    return img.reshape(size, f, size, f, img.shape[-1]).mean(axis=(1, 3), dtype=np.float64).astype(np.float32)


def evaluate_split(model, episodes, n_samples: int = 512, seed: int = 0, batch_size: int = 32):
    """Per-pair PSNR and SSIM lists of ``model`` on ``episodes``."""
    from .obsmodel import window_frames

    pairs = sample_pairs(episodes, n_samples, seed)
    scale = int(model.scale)
    psnrs, ssims = [], []
    for lo in range(0, len(pairs), batch_size):
        chunk = pairs[lo:lo + batch_size]
        windows = np.stack([window_frames(episodes[e].frames, i) for e, i in chunk])
        generated = model.predict(windows)
        for (e, i), gen in zip(chunk, generated):
            target = _downsample_image(episodes[e].targets[i], scale)
            psnrs.append(psnr(gen, target))
            ssims.append(ssim(gen, target, window_size=min(11, scale)))
    return psnrs, ssims


def evaluate_model(model, splits: dict, method: str | None = None, encoder: str = "",
                   n_samples: int = 512, seed: int = 0, expected_scale: int | None = 64,
                   flags=()) -> MetricReport:
    """Table-style report of ``model`` on every split in ``splits``.

    ``model`` needs a ``scale`` attribute and ``predict(windows)`` returning
    ``(N, scale, scale, 3)`` images in [0, 1].
    """
    scale = int(model.scale)
    if expected_scale is not None and scale != expected_scale:
        raise ScaleMismatchError(f"model is at scale {scale}, expected {expected_scale}")
    report = MetricReport(method=method or encoder or "model", encoder=encoder, scale=scale,
                          flags=list(flags))
    for name, episodes in splits.items():
        if not episodes:
            raise ValueError(f"split {name!r} is empty")
        report.splits[name] = summarize(*evaluate_split(model, episodes, n_samples, seed))
    return report


def _window_key(window: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(window, dtype=np.float32).tobytes()).hexdigest()


class OracleModel:
    """Debug model that returns the ground truth for every window it has seen."""

    def __init__(self, episodes, scale: int = 64):
        from .obsmodel import window_frames

        self.scale = scale
        self._lookup = {}
        for ep in episodes:
            for i in range(len(ep.frames)):
                self._lookup[_window_key(window_frames(ep.frames, i))] = _downsample_image(ep.targets[i], scale)

    def predict(self, windows):
        return np.stack([self._lookup[_window_key(w)] for w in windows])


class ConstantModel:
    """Predicts the same image for every window."""

    def __init__(self, image: np.ndarray):
        self.image = np.asarray(image, dtype=np.float32)
        self.scale = self.image.shape[0]

    def predict(self, windows):
        return np.broadcast_to(self.image, (len(windows),) + self.image.shape).copy()
