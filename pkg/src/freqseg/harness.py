"""Training, evaluation, ablation and inference drivers.

Reports are JSON lines with a fixed key order so runs diff cleanly.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import Split, load_split
from .errors import ConfigError, ShapeError
from .gradcheck import GradCheckReport, grad_check
from .metrics import binarize, dice, evaluate_pair
from .model import FreqSeg
from .optim import Adam
from .tensorio import normalize_for_display, read_image, save_tensor, write_image
from .wavelet import haar_decompose

log = logging.getLogger(__name__)

ABLATION_ROWS: Tuple[Tuple[str, Dict[str, bool]], ...] = (
    ("baseline", {"mfea": False, "fgbr": False, "mbgd": False}),
    ("+MFEA", {"mfea": True, "fgbr": False, "mbgd": False}),
    ("+MFEA+FGBR", {"mfea": True, "fgbr": True, "mbgd": False}),
    ("full", {"mfea": True, "fgbr": True, "mbgd": True}),
)


def write_jsonl(path, records: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def predict_masks(model: FreqSeg, images: np.ndarray, batch: int = 16):
    """Mask and boundary probabilities for a stack of images."""
    masks, bounds = [], []
    for s in range(0, len(images), batch):
        m, b = model.predict(images[s:s + batch])
        masks.append(m)
        bounds.append(b)
    mask = np.concatenate(masks) if masks else np.zeros((0,) + images.shape[1:])
    bound = None if not bounds or bounds[0] is None else np.concatenate(bounds)
    return mask, bound


def mean_dice(model: FreqSeg, split: Split, batch: int = 16) -> float:
    prob, _ = predict_masks(model, split.images, batch)
    return float(np.mean([dice(binarize(p[0]), g[0] > 0.5) for p, g in zip(prob, split.masks)]))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: FreqSeg
    history: List[dict] = field(default_factory=list)
    best_val_dice: float = float("-inf")
    best_epoch: int = -1
    best_params: Optional[Dict[str, np.ndarray]] = None

    def restore_best(self) -> FreqSeg:
        """Load the best-validation weights into ``model`` (no-op before any epoch)."""
        if self.best_params is not None:
            for name, value in self.best_params.items():
                self.model.store[name].value[...] = value
        return self.model

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else float("nan")


def _check_data(cfg: RunConfig, split: Split, name: str) -> None:
    if len(split) and split.images.shape[2:] != (cfg.image_size, cfg.image_size):
        raise ConfigError(f"{name} images are {split.images.shape[2:]}, config expects "
                          f"{cfg.image_size}x{cfg.image_size}")


def train(cfg: RunConfig, data_dir=None, out_dir=None, resume: bool = False,
          on_epoch: Optional[Callable[[dict], None]] = None,
          train_split: Optional[Split] = None, val_split: Optional[Split] = None) -> TrainResult:
    """Train end to end; writes ``last/``, ``best/`` and ``train_log.jsonl`` under ``out_dir``.

    ``out_dir=None`` keeps everything in memory. Data comes from ``data_dir``
    unless splits are passed directly.
    """
    cfg.validate()
    data_dir = Path(data_dir if data_dir is not None else cfg.data_dir)
    if train_split is None:
        train_split = load_split(data_dir, "train", cfg.boundary_radius)
    if val_split is None:
        val_split = load_split(data_dir, "val", cfg.boundary_radius)
    if len(train_split) == 0:
        raise ConfigError("training split is empty")
    _check_data(cfg, train_split, "train")
    if len(val_split) == 0:
        val_split = train_split
    out = Path(out_dir) if out_dir is not None else None

    shuffle = np.random.default_rng([cfg.seed, 7])
    start = 0
    result: TrainResult
    if resume and out is not None and (out / "last" / "manifest.txt").exists():
        model, opt, state = load_checkpoint(out / "last")
        # extending a run (larger epochs) is allowed; anything else must match
        if model.cfg.replace(epochs=cfg.epochs).to_text() != cfg.to_text():
            raise ConfigError("resume config differs from the checkpoint config")
        model.cfg = cfg
        shuffle.bit_generator.state = state["rng"]
        start = int(state["epoch"])
        result = TrainResult(model, state.get("history", []), state.get("best_val_dice", float("-inf")),
                             state.get("best_epoch", -1))
        if (out / "best" / "manifest.txt").exists():
            result.best_params = load_checkpoint(out / "best")[0].store.snapshot()
    else:
        model = FreqSeg(cfg)
        opt = Adam(model.store, lr=cfg.lr, decay=cfg.decay)
        result = TrainResult(model)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "config.txt").write_text(cfg.to_text())

    n = len(train_split)
    for epoch in range(start, cfg.epochs):
        lr = opt.lr
        perm = shuffle.permutation(n)
        sums = np.zeros(3)
        for s in range(0, n, cfg.batch):
            idx = np.sort(perm[s:s + cfg.batch])
            total, comps = model.loss(train_split.images[idx], train_split.masks[idx],
                                      train_split.boundaries[idx])
            opt.step()
            sums += np.array([total, comps["mask"], comps["boundary"]]) * len(idx)
        opt.end_epoch()
        val = mean_dice(model, val_split, cfg.batch)
        rec = {"epoch": epoch + 1, "loss": sums[0] / n, "mask_loss": sums[1] / n,
               "boundary_loss": sums[2] / n, "val_dice": val, "lr": lr}
        result.history.append(rec)
        improved = val > result.best_val_dice
        if improved:
            result.best_val_dice, result.best_epoch = val, epoch + 1
            result.best_params = model.store.snapshot()
        if out is not None:
            state = {"epoch": epoch + 1, "rng": shuffle.bit_generator.state,
                     "best_val_dice": result.best_val_dice, "best_epoch": result.best_epoch,
                     "history": result.history}
            save_checkpoint(out / "last", model, opt, state)
            if improved:
                save_checkpoint(out / "best", model, None, {"epoch": epoch + 1, "val_dice": val})
            with open(out / "train_log.jsonl", "a" if epoch else "w") as fh:
                fh.write(json.dumps(rec) + "\n")
        if on_epoch is not None:
            on_epoch(rec)
        log.info("epoch %d loss %.5f val_dice %.4f", epoch + 1, rec["loss"], val)
    return result


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_model(model: FreqSeg, split: Split, spacing: float = 1.0, split_name: str = "test"
                   ) -> Tuple[dict, List[dict]]:
    """Per-image records and their mean as an aggregate record."""
    _check_data(model.cfg, split, split_name)
    prob, _ = predict_masks(model, split.images, model.cfg.batch)
    records = []
    for sid, p, g in zip(split.ids, prob, split.masks):
        r = evaluate_pair(binarize(p[0]), g[0] > 0.5, spacing)
        records.append({"id": sid, "dice": r.dice, "miou": r.miou, "hd": r.hd, "hd95": r.hd95,
                        "hd_empty": r.hd_empty})
    return aggregate(records, split_name), records


def aggregate(records: List[dict], split_name: str = "test") -> dict:
    n = len(records)
    mean = (lambda k: float(np.mean([r[k] for r in records]))) if n else (lambda k: float("nan"))
    return {"kind": "aggregate", "split": split_name, "n": n, "dice": mean("dice"), "miou": mean("miou"),
            "hd": mean("hd"), "hd95": mean("hd95"), "n_hd_empty": sum(int(r["hd_empty"]) for r in records)}


def evaluate(checkpoint, data_dir, split: str = "test", report_path=None, spacing: Optional[float] = None
             ) -> Tuple[dict, List[dict]]:
    model, _, _ = load_checkpoint(checkpoint)
    data = load_split(data_dir, split, model.cfg.boundary_radius)
    agg, records = evaluate_model(model, data, model.cfg.spacing if spacing is None else spacing, split)
    if report_path is not None:
        write_jsonl(report_path, [dict(kind="image", **r) for r in records] + [agg])
    return agg, records


def trivial_dice(split: Split) -> Dict[str, float]:
    """Dice of the all-background and all-foreground predictors on a split."""
    fg = float(np.mean([dice(np.ones_like(g[0], bool), g[0] > 0.5) for g in split.masks]))
    bg = float(np.mean([dice(np.zeros_like(g[0], bool), g[0] > 0.5) for g in split.masks]))
    return {"all_foreground": fg, "all_background": bg}


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

def ablate(cfg: RunConfig, data_dir=None, out_dir=None, seeds: Optional[Sequence[int]] = None,
           split: str = "test") -> List[dict]:
    """Train and test the four module combinations on a shared dataset.

    Returns one record per row with metrics averaged over ``seeds`` and the
    per-seed Dice kept. Deltas are relative to the previous row and to the
    baseline.
    """
    data_dir = Path(data_dir if data_dir is not None else cfg.data_dir)
    seeds = list(seeds) if seeds is not None else [cfg.seed]
    train_split = load_split(data_dir, "train", cfg.boundary_radius)
    val_split = load_split(data_dir, "val", cfg.boundary_radius)
    test_split = load_split(data_dir, split, cfg.boundary_radius)
    rows = []
    for name, toggles in ABLATION_ROWS:
        per_seed = []
        row_cfg = cfg.replace(**toggles)
        for seed in seeds:
            c = row_cfg.replace(seed=seed)
            run_dir = None if out_dir is None else Path(out_dir) / f"{name.strip('+').replace('+', '_')}_s{seed}"
            res = train(c, data_dir, run_dir, train_split=train_split, val_split=val_split)
            agg, _ = evaluate_model(res.restore_best(), test_split, c.spacing, split)
            per_seed.append(agg)
            log.info("ablation %s seed %d dice %.4f", name, seed, agg["dice"])
        rows.append({
            "row": name, "mfea": toggles["mfea"], "fgbr": toggles["fgbr"], "mbgd": toggles["mbgd"],
            "config_hash": row_cfg.replace(seed=seeds[0]).config_hash(),
            "seeds": seeds,
            "dice": float(np.mean([a["dice"] for a in per_seed])),
            "miou": float(np.mean([a["miou"] for a in per_seed])),
            "hd": float(np.mean([a["hd"] for a in per_seed])),
            "dice_per_seed": [a["dice"] for a in per_seed],
            "hd_per_seed": [a["hd"] for a in per_seed],
        })
    for i, r in enumerate(rows):
        prev = rows[i - 1] if i else r
        r["delta_dice_prev"] = r["dice"] - prev["dice"]
        r["delta_hd_prev"] = r["hd"] - prev["hd"]
        r["delta_dice_baseline"] = r["dice"] - rows[0]["dice"]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_jsonl(Path(out_dir) / "ablation.jsonl", rows)
    return rows


def format_ablation(rows: List[dict]) -> str:
    lines = [f"{'row':<12s} {'MFEA':>4s} {'FGBR':>4s} {'MBGD':>4s} {'Dice%':>7s} {'mIoU%':>7s} {'HD px':>7s} {'dDice':>7s}"]
    for r in rows:
        mark = lambda b: "x" if b else "."
        lines.append(f"{r['row']:<12s} {mark(r['mfea']):>4s} {mark(r['fgbr']):>4s} {mark(r['mbgd']):>4s} "
                     f"{100 * r['dice']:7.2f} {100 * r['miou']:7.2f} {r['hd']:7.2f} "
                     f"{100 * r['delta_dice_prev']:+7.2f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# gradient check of the assembled model
# ---------------------------------------------------------------------------

# smallest geometry that still exercises both Haar levels: 32x32 image, patch 4, 8x8 grid
GRADCHECK_GEOMETRY = {"image_size": 32, "patch": 4, "up_blocks": 2, "channels": 16, "adapter_dim": 4,
                      "distill_hidden": 32}


def check_model_gradients(cfg: Optional[RunConfig] = None, seed: int = 0, eps: float = 1e-5,
                          tol: float = 1e-4, max_coords: int = 32) -> GradCheckReport:
    """Finite-difference check of the full multi-task loss on one random image.

    Zero-initialised entries (adapter up-projections, biases) are perturbed
    first so every path carries gradient and no pre-activation sits exactly
    on a ReLU kink.
    """
    cfg = (cfg or RunConfig().replace(**GRADCHECK_GEOMETRY)).validate()
    model = FreqSeg(cfg)
    rng = np.random.default_rng([seed, 11])
    for _, p in model.store.items():
        if p.value.ndim and not np.any(p.value):
            p.value[...] = 0.1 * rng.normal(size=p.value.shape)
    image = rng.random((1, 1, cfg.image_size, cfg.image_size))
    yy, xx = np.mgrid[:cfg.image_size, :cfg.image_size]
    c = cfg.image_size / 2
    mask = (((yy - c) ** 2 + (xx - c) ** 2) < (cfg.image_size / 4) ** 2).astype(np.float64)[None, None]

    def f():
        return model.loss(image, mask)[0]

    def loss():
        return model.loss(image, mask, backward=False)[0]

    return grad_check(f, model.store, eps=eps, tol=tol, max_coords=max_coords, seed=seed, loss=loss)


# ---------------------------------------------------------------------------
# inference and inspection dumps
# ---------------------------------------------------------------------------

def _band_images(feat: np.ndarray) -> Dict[str, np.ndarray]:
    bands = haar_decompose(feat)
    return {
        "ll": bands.ll[0].mean(axis=0),
        "lh": np.abs(bands.lh[0]).mean(axis=0),
        "hl": np.abs(bands.hl[0]).mean(axis=0),
        "hh": np.abs(bands.hh[0]).mean(axis=0),
    }


def dump_bands(model: FreqSeg, out_dir) -> List[Path]:
    """Write 4 band images and 2 attention maps for each of the two scales.

    Bands are channel means (|.| for detail bands) of the encoder features;
    attention maps are average-pooled to the band resolution of the scale.
    Must follow a forward pass on a single image.
    """
    if model.mfea is None or model.last_mfea is None:
        raise ConfigError("band dumps need a model with MFEA and a preceding forward pass")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    feat = model.last_features
    a_b, a_s = model.last_mfea.a_b, model.last_mfea.a_s
    written = []
    scales = {"fine": (feat, a_b, a_s)}
    pooled = T.avg_pool2(feat)
    scales["coarse"] = (pooled, T.avg_pool2(a_b), T.avg_pool2(a_s))
    for scale, (f, ab, as_) in scales.items():
        for band, img in _band_images(f).items():
            p = out / f"{scale}_{band}.pgm"
            write_image(p, normalize_for_display(img))
            written.append(p)
        for name, att in (("attn_boundary", ab), ("attn_structure", as_)):
            p = out / f"{scale}_{name}.pgm"
            write_image(p, np.clip(T.avg_pool2(att)[0, 0], 0.0, 1.0))
            written.append(p)
    return written


def image_bands(image: np.ndarray, out_dir) -> List[Path]:
    """Haar bands of a raw image (no model): PGM previews plus FQT1 tensors."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = image.shape
    bands = haar_decompose(image[None, None, : h - h % 2, : w - w % 2])
    written = []
    for name in ("ll", "lh", "hl", "hh"):
        arr = getattr(bands, name)
        p = out / f"{name}.pgm"
        write_image(p, normalize_for_display(arr[0, 0] if name == "ll" else np.abs(arr[0, 0])))
        save_tensor(out / f"{name}.fqt", arr)
        written += [p, out / f"{name}.fqt"]
    return written


def infer(checkpoint, image_path, out_dir, write_prob: bool = False, dump: bool = False,
          model: Optional[FreqSeg] = None) -> Dict[str, Path]:
    if model is None:
        model, _, _ = load_checkpoint(checkpoint)
    image = read_image(image_path)
    p = model.cfg.patch
    if image.shape[0] % p or image.shape[1] % p:
        raise ShapeError(f"image {image.shape} not divisible by patch {p}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(image_path).stem
    mask_prob, boundary_prob = model.predict(image[None, None])
    paths = {"mask": out / f"{stem}_mask.pgm"}
    write_image(paths["mask"], binarize(mask_prob[0, 0]).astype(float))
    if boundary_prob is not None:
        paths["boundary"] = out / f"{stem}_boundary.pgm"
        write_image(paths["boundary"], binarize(boundary_prob[0, 0]).astype(float))
    if write_prob:
        paths["prob"] = out / f"{stem}_prob.pgm"
        write_image(paths["prob"], mask_prob[0, 0])
    if dump:
        for q in dump_bands(model, out / f"{stem}_bands"):
            paths[q.stem] = q
        if model.fgbr is not None:
            paths["prototype"] = out / f"{stem}_prototype.fqt"
            save_tensor(paths["prototype"], model.fgbr.last_prototype)
    return paths
