"""Classical supervised classification and separability analysis.

Spectral angle mapper, Gaussian maximum likelihood and kNN over labeled
pixels, with stratified splitting, confusion/kappa accuracy reporting,
Bhattacharyya/Jeffries-Matusita class separability and band ranking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cube import LabelMask
from .envi_io import HyperCube

GAUSSIAN_COV_RIDGE = 1e-6


@dataclass
class ClassifierModel:
    kind: str
    class_ids: list[int]
    class_names: dict[int, str]
    class_means: np.ndarray
    class_covs: np.ndarray | None = None
    cov_inverses: np.ndarray | None = None
    log_dets: np.ndarray | None = None
    priors: np.ndarray | None = None
    train_X: np.ndarray | None = None
    train_y: np.ndarray | None = None
    k: int | None = None
    sam_threshold_rad: float | None = None


@dataclass
class AccuracyReport:
    """Confusion matrix (rows = reference) and the usual summary metrics."""

    class_ids: list[int]
    class_names: dict[int, str]
    confusion: np.ndarray
    overall_accuracy: float
    kappa: float
    producer_accuracy: np.ndarray
    user_accuracy: np.ndarray
    support: np.ndarray
    total: int


def stratified_split(mask: LabelMask, train_fraction: float,
                     seed: int = 0) -> tuple[LabelMask, LabelMask]:
    """Per-class seeded split; ceil(fraction*n) pixels go to training."""
    if not (0.0 < train_fraction <= 1.0):
        raise ValueError("train_fraction must be in (0, 1]")
    rng = np.random.default_rng(seed)
    train = np.zeros_like(mask.labels)
    test = np.zeros_like(mask.labels)
    flat = mask.labels.ravel()
    for cid in mask.class_ids():
        idx = np.nonzero(flat == cid)[0]
        perm = rng.permutation(idx.size)
        n_train = int(np.ceil(train_fraction * idx.size))
        tr = idx[perm[:n_train]]
        te = idx[perm[n_train:]]
        train.ravel()[tr] = cid
        test.ravel()[te] = cid
    names = dict(mask.class_names)
    return LabelMask(train, names), LabelMask(test, names)


def _gather_training(cube: HyperCube, mask: LabelMask) -> tuple[np.ndarray, np.ndarray]:
    if mask.labels.shape != (cube.lines, cube.samples):
        raise ValueError("mask dims do not match cube")
    sel = (mask.labels != 0) & cube.valid_mask()
    return cube.values[sel], mask.labels[sel]


def train(cube: HyperCube, mask: LabelMask, kind: str, k: int = 5,
          sam_threshold_rad: float | None = None) -> ClassifierModel:
    """Fit a classifier of the given kind on the labeled pixels.

    gaussian_ml regularizes each class covariance with
    GAUSSIAN_COV_RIDGE * trace/bands * I and sets priors from class counts;
    knn stores the training samples and requires an odd k not larger than the
    training set.
    """
    if kind not in ("sam", "gaussian_ml", "knn"):
        raise ValueError(f"unknown classifier kind {kind!r}")
    X, y = _gather_training(cube, mask)
    if X.shape[0] == 0:
        raise ValueError("no labeled pixels")
    ids = sorted(set(int(v) for v in np.unique(y)))
    means = np.vstack([X[y == cid].mean(axis=0) for cid in ids])
    model = ClassifierModel(kind=kind, class_ids=ids,
                            class_names=dict(mask.class_names), class_means=means)
    if kind == "gaussian_ml":
        covs, invs, logdets, priors = [], [], [], []
        bands = cube.bands
        for cid in ids:
            data = X[y == cid]
            if data.shape[0] < 2:
                raise ValueError(f"class {cid} has fewer than 2 samples")
            cov = np.cov(data, rowvar=False, ddof=1).reshape(bands, bands)
            cov = cov + GAUSSIAN_COV_RIDGE * np.trace(cov) / bands * np.eye(bands)
            if np.trace(cov) == 0:
                cov = GAUSSIAN_COV_RIDGE * np.eye(bands)
            covs.append(cov)
            sign, logdet = np.linalg.slogdet(cov)
            if sign <= 0:
                raise ValueError(f"class {cid} covariance not positive definite")
            invs.append(np.linalg.inv(cov))
            logdets.append(logdet)
            priors.append(data.shape[0])
        model.class_covs = np.stack(covs)
        model.cov_inverses = np.stack(invs)
        model.log_dets = np.asarray(logdets)
        model.priors = np.asarray(priors, dtype=float) / len(y)
    elif kind == "knn":
        k = int(k)
        if k % 2 == 0:
            raise ValueError("k must be odd")
        if k > X.shape[0]:
            raise ValueError(f"k={k} exceeds training size {X.shape[0]}")
        model.train_X = X
        model.train_y = y.astype(np.int64)
        model.k = k
    else:
        model.sam_threshold_rad = sam_threshold_rad
    return model


def predict(model: ClassifierModel, cube: HyperCube, threads: int = 1) -> LabelMask:
    """Label every pixel; 0 marks unclassified (nodata, zero spectra, or SAM
    angles beyond the threshold). Ties resolve to the smallest class index."""
    if model.class_means.shape[1] != cube.bands:
        raise ValueError("model was trained on a different band count")
    flat = cube.flat()
    n = flat.shape[0]
    out = np.zeros(n, dtype=np.int64)
    valid = cube.valid_mask().ravel()
    ids = np.asarray(model.class_ids)

    if model.kind == "sam":
        norms = np.linalg.norm(flat, axis=1)
        mnorm = np.linalg.norm(model.class_means, axis=1)
        ok = valid & (norms > 0)
        cosims = (flat[ok] @ model.class_means.T) / np.outer(norms[ok], mnorm)
        angles = np.arccos(np.clip(cosims, -1.0, 1.0))
        best = np.argmin(angles, axis=1)
        labels = ids[best]
        if model.sam_threshold_rad is not None:
            labels = np.where(angles[np.arange(len(best)), best] <= model.sam_threshold_rad,
                              labels, 0)
        out[ok] = labels
    elif model.kind == "gaussian_ml":
        scores = np.empty((n, len(ids)))
        for c, cid in enumerate(ids):
            d = flat - model.class_means[c]
            quad = np.einsum("ij,jk,ik->i", d, model.cov_inverses[c], d)
            scores[:, c] = np.log(model.priors[c]) - 0.5 * model.log_dets[c] - 0.5 * quad
        out = ids[np.argmax(scores, axis=1)]
        out[~valid] = 0
    else:
        from .parallel import map_blocks

        tx = model.train_X
        ty = model.train_y
        k = model.k

        def block(start: int, stop: int) -> None:
            chunk = flat[start:stop]
            d2 = (
                np.sum(chunk * chunk, axis=1, keepdims=True)
                - 2.0 * chunk @ tx.T
                + np.sum(tx * tx, axis=1)
            )
            order = np.argsort(d2, axis=1, kind="stable")[:, :k]
            votes = ty[order]
            for i in range(votes.shape[0]):
                counts = np.bincount(votes[i], minlength=int(ids.max()) + 1)
                # first argmax over ascending ids = smallest class on ties
                out[start + i] = int(ids[int(np.argmax(counts[ids]))])

        map_blocks(block, n, threads=threads)
        out[~valid] = 0

    names = dict(model.class_names)
    for cid in model.class_ids:
        names.setdefault(cid, f"class_{cid}")
    return LabelMask(out.reshape(cube.lines, cube.samples), names)


def evaluate(predicted: LabelMask, reference: LabelMask) -> AccuracyReport:
    """Confusion matrix over pixels labeled in both masks, plus OA and kappa.

    kappa = (p_o - p_e) / (1 - p_e) with the expected agreement p_e taken
    from the row/column marginals; a degenerate p_e == 1 maps to kappa = 1
    for perfect agreement and 0 otherwise.
    """
    if predicted.labels.shape != reference.labels.shape:
        raise ValueError("mask shapes differ")
    sel = (predicted.labels != 0) & (reference.labels != 0)
    pred = predicted.labels[sel]
    ref = reference.labels[sel]
    if pred.size == 0:
        raise ValueError("no pixels labeled in both masks")
    ids = sorted(set(np.unique(pred).tolist()) | set(np.unique(ref).tolist()))
    index = {cid: i for i, cid in enumerate(ids)}
    ncls = len(ids)
    confusion = np.zeros((ncls, ncls), dtype=np.int64)
    np.add.at(confusion, (np.vectorize(index.get)(ref), np.vectorize(index.get)(pred)), 1)
    total = int(confusion.sum())
    p_o = float(np.trace(confusion)) / total
    row = confusion.sum(axis=1) / total
    col = confusion.sum(axis=0) / total
    p_e = float(np.sum(row * col))
    if abs(1.0 - p_e) < 1e-15:
        kappa = 1.0 if p_o >= 1.0 - 1e-15 else 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    with np.errstate(invalid="ignore", divide="ignore"):
        producer = np.where(confusion.sum(axis=1) > 0,
                            np.diag(confusion) / np.maximum(confusion.sum(axis=1), 1), np.nan)
        user = np.where(confusion.sum(axis=0) > 0,
                        np.diag(confusion) / np.maximum(confusion.sum(axis=0), 1), np.nan)
    names = dict(reference.class_names)
    names.update({k: v for k, v in predicted.class_names.items() if k not in names})
    return AccuracyReport(
        class_ids=ids,
        class_names={cid: names.get(cid, f"class_{cid}") for cid in ids},
        confusion=confusion,
        overall_accuracy=p_o,
        kappa=float(kappa),
        producer_accuracy=producer,
        user_accuracy=user,
        support=confusion.sum(axis=1),
        total=total,
    )


# ---------------------------------------------------------------------------
# Separability
# ---------------------------------------------------------------------------

def _bhattacharyya(m1, c1, m2, c2) -> float:
    cm = 0.5 * (c1 + c2)
    d = m1 - m2
    term1 = 0.125 * float(d @ np.linalg.solve(cm, d))
    s_m, ld_m = np.linalg.slogdet(cm)
    s_1, ld_1 = np.linalg.slogdet(c1)
    s_2, ld_2 = np.linalg.slogdet(c2)
    if s_m <= 0 or s_1 <= 0 or s_2 <= 0:
        return float("inf")
    return term1 + 0.5 * (ld_m - 0.5 * ld_1 - 0.5 * ld_2)


@dataclass
class SeparabilityReport:
    class_ids: list[int]
    class_names: dict[int, str]
    pairs: list[dict]
    band_ranking: list[int]
    per_band_jm: np.ndarray  # (n_pairs, bands)
    mean_spectra: np.ndarray  # (classes, bands)
    std_spectra: np.ndarray
    wavelengths: np.ndarray | None = None
    field_names: list[str] = field(default_factory=lambda: ["bhattacharyya", "jeffries_matusita"])


def separability(cube: HyperCube, mask: LabelMask) -> SeparabilityReport:
    """Pairwise Bhattacharyya / Jeffries-Matusita distances and band ranking.

    Full-covariance statistics for the pairwise table; the per-band variant
    uses scalar means/variances and ranks bands by their worst-case (minimum)
    pairwise JM, descending. Also carries per-class mean and std spectra for
    export.
    """
    X, y = _gather_training(cube, mask)
    ids = sorted(set(int(v) for v in np.unique(y)))
    if len(ids) < 2:
        raise ValueError("separability needs at least two classes")
    stats = {}
    for cid in ids:
        data = X[y == cid]
        if data.shape[0] < 2:
            raise ValueError(f"class {cid} has fewer than 2 samples")
        stats[cid] = (data.mean(axis=0),
                      np.cov(data, rowvar=False, ddof=1).reshape(cube.bands, cube.bands),
                      data.std(axis=0, ddof=1))
    pairs = []
    per_band = []
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            m1, c1, s1 = stats[ids[a]]
            m2, c2, s2 = stats[ids[b]]
            B = _bhattacharyya(m1, c1, m2, c2)
            jm = 2.0 * (1.0 - np.exp(-B))
            pairs.append({"class_a": ids[a], "class_b": ids[b],
                          "bhattacharyya": float(B), "jeffries_matusita": float(jm)})
            v1 = np.diag(c1)
            v2 = np.diag(c2)
            with np.errstate(divide="ignore", invalid="ignore"):
                bb = (0.25 * (m1 - m2) ** 2 / (v1 + v2)
                      + 0.5 * np.log((v1 + v2) / (2.0 * np.sqrt(v1 * v2))))
            bb = np.where(np.isfinite(bb), bb, np.inf)
            per_band.append(2.0 * (1.0 - np.exp(-bb)))
    per_band = np.vstack(per_band)
    worst = per_band.min(axis=0)
    ranking = [int(i) for i in np.lexsort((np.arange(cube.bands), -worst))]
    wl = np.asarray(cube.header.wavelengths) if cube.header.wavelengths else None
    return SeparabilityReport(
        class_ids=ids,
        class_names={cid: mask.class_names.get(cid, f"class_{cid}") for cid in ids},
        pairs=pairs,
        band_ranking=ranking,
        per_band_jm=per_band,
        mean_spectra=np.vstack([stats[cid][0] for cid in ids]),
        std_spectra=np.vstack([stats[cid][2] for cid in ids]),
        wavelengths=wl,
    )


def write_class_spectra_csv(report: SeparabilityReport, path: str | Path) -> None:
    """Per-class mean and std spectra, one row per band."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["band", "wavelength_nm"]
        for cid in report.class_ids:
            name = report.class_names[cid]
            header += [f"mean_{name}", f"std_{name}"]
        writer.writerow(header)
        bands = report.mean_spectra.shape[1]
        for b in range(bands):
            row = [b, repr(float(report.wavelengths[b])) if report.wavelengths is not None else ""]
            for c in range(len(report.class_ids)):
                row += [repr(float(report.mean_spectra[c, b])),
                        repr(float(report.std_spectra[c, b]))]
            writer.writerow(row)


def save_classifier(model: ClassifierModel, path: str | Path) -> None:
    import json

    doc = {
        "kind": model.kind,
        "class_ids": model.class_ids,
        "class_names": {str(k): v for k, v in model.class_names.items()},
        "class_means": model.class_means.tolist(),
    }
    for name in ("class_covs", "cov_inverses", "log_dets", "priors", "train_X", "train_y"):
        arr = getattr(model, name)
        if arr is not None:
            doc[name] = np.asarray(arr).tolist()
    if model.k is not None:
        doc["k"] = model.k
    if model.sam_threshold_rad is not None:
        doc["sam_threshold_rad"] = model.sam_threshold_rad
    Path(path).write_text(json.dumps(doc) + "\n")


def load_classifier(path: str | Path) -> ClassifierModel:
    import json

    doc = json.loads(Path(path).read_text())
    model = ClassifierModel(
        kind=doc["kind"],
        class_ids=[int(v) for v in doc["class_ids"]],
        class_names={int(k): v for k, v in doc["class_names"].items()},
        class_means=np.asarray(doc["class_means"]),
    )
    for name in ("class_covs", "cov_inverses", "log_dets", "priors", "train_X"):
        if name in doc:
            setattr(model, name, np.asarray(doc[name]))
    if "train_y" in doc:
        model.train_y = np.asarray(doc["train_y"], dtype=np.int64)
    model.k = doc.get("k")
    model.sam_threshold_rad = doc.get("sam_threshold_rad")
    return model


def grid_search(cube: HyperCube, mask: LabelMask, kind: str, grid: list,
                train_fraction: float = 0.7, seed: int = 0) -> dict:
    """Tiny hyperparameter sweep: k for knn, threshold (radians) for sam.

    Returns per-value OA/kappa rows and the best value (ties to the smaller
    parameter).
    """
    if kind not in ("knn", "sam"):
        raise ValueError("grid search covers 'knn' and 'sam' only")
    train_mask, test_mask = stratified_split(mask, train_fraction, seed)
    rows = []
    for value in grid:
        if kind == "knn":
            model = train(cube, train_mask, "knn", k=int(value))
        else:
            model = train(cube, train_mask, "sam", sam_threshold_rad=float(value))
        report = evaluate(predict(model, cube), test_mask)
        rows.append({"value": value, "overall_accuracy": report.overall_accuracy,
                     "kappa": report.kappa})
    best = max(rows, key=lambda r: (r["overall_accuracy"], -float(r["value"])))
    return {"kind": kind, "rows": rows, "best": best["value"]}
