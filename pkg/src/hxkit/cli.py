"""Command-line entry point wiring the toolkit into batch pipelines.

Exit codes: 0 success, 1 usage error, 2 data error. Randomized subcommands
take --seed (default 42) and log it. Cube outputs are ENVI .hdr + binary
pairs; reports are canonical JSON plus static HTML.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import classify as cls
from . import cube as cb
from . import envi_io as eio
from . import estimate as est
from . import fusion as fus
from . import preprocess as pre
from . import quality as qual
from . import render as rnd
from . import unmix as unm
from .errors import HxkitError
from .parallel import resolve_threads
from .report import AnalysisReport, default_timestamp, emit_report
from .resample import (builtin_sensor, gaussian_srf, read_sensor_csv,
                       spatial_downsample, spectral_resample)

DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exception (exit code 1)."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parse_range(text: str) -> tuple[int, int]:
    a, _, b = text.partition(":")
    return int(a), int(b)


def _parse_int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _log_seed(seed: int) -> None:
    print(f"[hxkit] seed={seed}", file=sys.stderr)


def _load(args, attr="input") -> eio.HyperCube:
    path = getattr(args, attr)
    data = getattr(args, "data", None)
    nodata = getattr(args, "nodata", None)
    return eio.load_cube(path, data_path=data, nodata=nodata)


def _save(cube: eio.HyperCube, args) -> None:
    eio.save_cube(cube, args.output,
                  interleave=getattr(args, "interleave", "bsq"),
                  data_type=getattr(args, "data_type", "f64"))


def _save_image(image: np.ndarray, path: str) -> None:
    nodata = None
    if np.any(~np.isfinite(image)):
        image = np.nan_to_num(image, nan=-9999.0, posinf=-9999.0, neginf=-9999.0)
        nodata = -9999.0
    eio.save_cube(eio.cube_from_image(image, nodata=nodata), path)


def _new_report(tool: str, args, parameters: dict) -> AnalysisReport:
    rep = AnalysisReport(tool=tool, parameters=parameters, timestamp=default_timestamp())
    for attr in ("input", "hx", "mx", "mask", "reference", "training",
                 "predicted", "endmembers", "library", "model"):
        path = getattr(args, attr, None)
        if path and Path(str(path)).exists():
            rep.add_input(path)
    return rep


def _emit(rep: AnalysisReport, args, basename: str) -> None:
    if getattr(args, "report", None):
        paths = emit_report(rep, args.report, basename)
        for p in paths:
            print(f"[hxkit] wrote {p}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_info(args) -> int:
    cube = _load(args)
    h = cube.header
    print(f"samples: {h.samples}")
    print(f"lines: {h.lines}")
    print(f"bands: {h.bands}")
    print(f"data type: {h.data_type}")
    print(f"interleave: {h.interleave}")
    print(f"byte order: {h.byte_order}")
    if h.wavelengths:
        print(f"wavelengths: {h.wavelengths[0]:g} .. {h.wavelengths[-1]:g} nm")
    if h.bbl:
        print(f"good bands: {sum(h.bbl)}/{h.bands}")
    nonfinite = int(np.count_nonzero(~np.isfinite(cube.values)))
    if nonfinite:
        print(f"non-finite values: {nonfinite}")
    return 0


def cmd_subset(args) -> int:
    cube = _load(args)
    if args.rows or args.cols:
        rows = _parse_range(args.rows) if args.rows else (0, cube.lines)
        columns = _parse_range(args.cols) if args.cols else (0, cube.samples)
        cube = cb.spatial_subset(cube, rows, columns)
    if args.bands:
        cube = cb.spectral_subset(cube, _parse_int_list(args.bands))
    _save(cube, args)
    return 0


def cmd_scale(args) -> int:
    _save(cb.scale_cube(_load(args), args.factor), args)
    return 0


def cmd_stats(args) -> int:
    cube = _load(args)
    stats = cb.band_stats(cube)
    print(f"{'band':>4} {'min':>12} {'max':>12} {'mean':>12} {'std':>12} {'count':>8}")
    for s in stats:
        print(f"{s['band']:>4} {s['min']:>12.6g} {s['max']:>12.6g} "
              f"{s['mean']:>12.6g} {s['std']:>12.6g} {s['count']:>8}")
    if args.csv:
        import csv as _csv

        with open(args.csv, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["band", "min", "max", "mean", "std", "count"])
            for s in stats:
                w.writerow([s["band"], repr(s["min"]), repr(s["max"]),
                            repr(s["mean"]), repr(s["std"]), s["count"]])
    if args.scatter:
        i, j = _parse_int_list(args.scatter)[:2]
        sc = cb.scatter_stats(cube, i, j)
        print(f"pearson r({i},{j}) = {sc['pearson_r']:.6f}")
        if args.scatter_csv:
            cb.write_scatter_csv(sc, args.scatter_csv)
    return 0


def _sensor_from_args(args) -> tuple[np.ndarray, np.ndarray]:
    if args.preset:
        return builtin_sensor(args.preset)
    if args.sensor:
        return read_sensor_csv(args.sensor)
    raise UsageError("provide --preset or --sensor")


def cmd_srf(args) -> int:
    cube = _load(args)
    if cube.header.wavelengths is None:
        raise HxkitError("cube has no wavelengths; cannot build an SRF")
    centers, fwhm = _sensor_from_args(args)
    srf = gaussian_srf(centers, fwhm, np.asarray(cube.header.wavelengths))
    import csv as _csv

    with open(args.output, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["source_wavelength_nm"] + [f"band_{i + 1}" for i in range(len(centers))])
        for i, wl in enumerate(srf.source_wavelengths):
            w.writerow([repr(float(wl))] + [repr(float(v)) for v in srf.weights[:, i]])
    print(f"[hxkit] srf: {len(centers)} target bands over {srf.source_wavelengths.size} "
          f"source bands", file=sys.stderr)
    return 0


def cmd_resample(args) -> int:
    cube = _load(args)
    if args.preset or args.sensor:
        centers, fwhm = _sensor_from_args(args)
        if cube.header.wavelengths is None:
            raise HxkitError("cube has no wavelengths; spectral resampling needs them")
        srf = gaussian_srf(centers, fwhm, np.asarray(cube.header.wavelengths))
        cube = spectral_resample(cube, srf)
    if args.spatial_factor and args.spatial_factor > 1:
        cube = spatial_downsample(cube, args.spatial_factor, psf=args.psf)
    _save(cube, args)
    return 0


def cmd_preprocess(args) -> int:
    cube = _load(args)
    op = args.op
    if op == "savgol":
        out = pre.savitzky_golay_cube(cube, args.window, args.order)
    elif op == "continuum":
        out = pre.continuum_removal_cube(cube)
    elif op in ("standard", "minmax", "robust"):
        out = pre.fit_transform(cube, op)
    elif op in ("pca", "mnf"):
        k = args.k if args.k else cube.bands
        if op == "pca":
            model = pre.fit_pca(cube, k)
        else:
            model = pre.fit_mnf(cube, k, noise_estimator=args.noise_estimator)
        out = pre.apply_transform(model, cube)
        if args.model_out:
            pre.save_model(model, args.model_out)
    elif op == "apply":
        if not args.model:
            raise UsageError("--model required for op=apply")
        out = pre.apply_transform(pre.load_model(args.model), cube)
    elif op == "inverse":
        if not args.model:
            raise UsageError("--model required for op=inverse")
        out = pre.inverse_transform(pre.load_model(args.model), cube)
    else:
        raise UsageError(f"unknown preprocess op {op!r}")
    _save(out, args)
    return 0


def cmd_quality(args) -> int:
    cube = _load(args)
    op = args.op
    if op in ("noise", "snr", "badbands"):
        roi = None
        if args.roi:
            roi = cb.load_label_mask(args.roi, args.roi_names)
        noise = qual.estimate_noise(cube, args.method, roi=roi, block=args.block)
        if args.csv:
            qual.write_noise_csv(noise, args.csv, cube.header.wavelengths)
        if op == "snr":
            snr = qual.compute_snr(cube, noise)
            for b, v in enumerate(snr):
                print(f"band {b}: {v:.3f} dB")
        elif op == "badbands":
            if args.sigma_threshold is not None:
                bbl = [int(np.isfinite(s) and s <= args.sigma_threshold) for s in noise.sigma]
            else:
                bbl = qual.detect_bad_bands(noise, args.threshold)
            print(",".join(str(v) for v in bbl))
            if args.output:
                header = cube.header.copy()
                header.bbl = bbl
                Path(args.output).write_text(eio.emit_header(header))
        else:
            for b in range(cube.bands):
                print(f"band {b}: sigma={noise.sigma[b]:.6g} snr={noise.snr_db[b]:.3f} dB")
        rep = _new_report("quality-noise", args, {"method": args.method, "op": op})
        rep.metrics["sample_count"] = noise.sample_count
        rep.add_table("noise", ["band", "sigma", "snr_db"],
                      [[b, float(noise.sigma[b]), float(noise.snr_db[b])]
                       for b in range(cube.bands)])
        _emit(rep, args, "quality_noise")
        return 0
    if not args.output:
        raise UsageError(f"quality op {op!r} requires -o/--output")
    if op == "destripe":
        _save(qual.destripe(cube, axis=args.axis), args)
    elif op == "whiten":
        _save(qual.whiten(cube), args)
    else:  # cibr
        ratio = qual.cibr(cube, absorption_nm=args.absorption, left_nm=args.left,
                          right_nm=args.right)
        _save_image(ratio, args.output)
    return 0


def cmd_unmix_count(args) -> int:
    cube = _load(args)
    count = unm.material_count_hfc(cube, args.pfa)
    print(count)
    rep = _new_report("unmix-count", args, {"pfa": args.pfa})
    rep.metrics["material_count"] = count
    _emit(rep, args, "material_count")
    return 0


def cmd_unmix_extract(args) -> int:
    cube = _load(args)
    _log_seed(args.seed)
    if args.algo == "vca":
        ems = unm.extract_vca(cube, args.p, seed=args.seed)
    elif args.algo == "nfindr":
        ems = unm.extract_nfindr(cube, args.p, seed=args.seed)
    elif args.algo == "atgp":
        ems = unm.extract_atgp(cube, args.p)
    elif args.algo == "ppi":
        ems = unm.extract_ppi(cube, args.p, n_skewers=args.skewers, seed=args.seed)
    else:
        raise UsageError(f"unknown extraction algorithm {args.algo!r}")
    cb.write_library_csv(ems.to_library(), args.output)
    if ems.source_pixels:
        pixels = ";".join(f"{r},{c}" for r, c in ems.source_pixels)
        print(f"[hxkit] source pixels: {pixels}", file=sys.stderr)
    return 0


def _read_library(path: str, cube: eio.HyperCube) -> cb.SpectralLibrary:
    lib = cb.read_library_csv(path)
    if lib.spectra.shape[1] != cube.bands:
        raise HxkitError(
            f"library has {lib.spectra.shape[1]} bands, cube has {cube.bands}"
        )
    return lib


def _library_matrix(path: str, cube: eio.HyperCube) -> np.ndarray:
    return _read_library(path, cube).spectra.T  # bands x m


def _abundance_header(cube: eio.HyperCube, names: list[str]) -> eio.HeaderInfo:
    header = eio.HeaderInfo(samples=cube.samples, lines=cube.lines, bands=len(names))
    header.extra["band names"] = "{" + ", ".join(names) + "}"
    return header


def cmd_unmix_abundance(args) -> int:
    cube = _load(args)
    lib = _read_library(args.endmembers, cube)
    E = lib.spectra.T
    threads = resolve_threads(args.threads)
    if args.method == "ucls":
        amap = unm.abundance_ucls(cube, E)
    elif args.method == "nnls":
        amap = unm.abundance_nnls(cube, E, threads=threads)
    elif args.method == "fcls":
        amap = unm.abundance_fcls(cube, E, delta=args.delta, threads=threads)
    elif args.method == "gbm":
        amap, gamma = unm.abundance_gbm(cube, E, iterations=args.iterations,
                                        threads=threads)
        if args.gamma:
            header = eio.HeaderInfo(samples=cube.samples, lines=cube.lines,
                                    bands=max(1, gamma.gamma.shape[2]))
            vals = gamma.gamma if gamma.gamma.shape[2] else np.zeros(
                (cube.lines, cube.samples, 1))
            eio.save_cube(eio.HyperCube(header, vals), args.gamma)
    else:
        raise UsageError(f"unknown abundance method {args.method!r}")
    header = _abundance_header(cube, list(lib.names))
    eio.save_cube(eio.HyperCube(header, amap.values), args.output)
    if args.rmse:
        _save_image(unm.rmse_map(cube, E, amap), args.rmse)
    return 0


def cmd_unmix_sparse(args) -> int:
    cube = _load(args)
    lib = _read_library(args.library, cube)
    amap = unm.sparse_unmix(cube, lib.spectra.T, args.lam,
                            constraint=args.constraint,
                            max_iter=args.max_iter, tol=args.tol)
    header = _abundance_header(cube, list(lib.names))
    eio.save_cube(eio.HyperCube(header, amap.values), args.output)
    return 0


def cmd_unmix_rmse(args) -> int:
    cube = _load(args)
    E = _library_matrix(args.endmembers, cube)
    acube = eio.load_cube(args.abundance)
    amap = unm.AbundanceMap(values=acube.values, constraint="none")
    _save_image(unm.rmse_map(cube, E, amap), args.output)
    return 0


def _load_mask(path: str, names: str) -> cb.LabelMask:
    return cb.load_label_mask(path, names)


def cmd_classify_split(args) -> int:
    mask = _load_mask(args.mask, args.names)
    _log_seed(args.seed)
    train_mask, test_mask = cls.stratified_split(mask, args.fraction, seed=args.seed)
    cb.save_label_mask(train_mask, args.train_out, Path(args.train_out).with_suffix(".json"))
    cb.save_label_mask(test_mask, args.test_out, Path(args.test_out).with_suffix(".json"))
    return 0


def cmd_classify_train(args) -> int:
    cube = _load(args)
    mask = _load_mask(args.mask, args.names)
    model = cls.train(cube, mask, args.kind, k=args.k,
                      sam_threshold_rad=args.sam_threshold)
    cls.save_classifier(model, args.output)
    return 0


def cmd_classify_predict(args) -> int:
    cube = _load(args)
    model = cls.load_classifier(args.model)
    labels = cls.predict(model, cube, threads=resolve_threads(args.threads))
    cb.save_label_mask(labels, args.output, Path(args.output).with_suffix(".json"))
    return 0


def cmd_classify_evaluate(args) -> int:
    predicted = _load_mask(args.predicted, args.pred_names)
    reference = _load_mask(args.reference, args.ref_names)
    report = cls.evaluate(predicted, reference)
    print(f"overall accuracy: {report.overall_accuracy:.6f}")
    print(f"kappa: {report.kappa:.6f}")
    rep = _new_report("classify-evaluate", args, {})
    rep.metrics["overall_accuracy"] = report.overall_accuracy
    rep.metrics["kappa"] = report.kappa
    rep.metrics["total_pixels"] = report.total
    names = [report.class_names[c] for c in report.class_ids]
    rep.add_table("confusion", ["reference\\predicted"] + names,
                  [[names[i]] + [int(v) for v in report.confusion[i]]
                   for i in range(len(names))])
    rep.add_table("per_class", ["class", "producer_accuracy", "user_accuracy", "support"],
                  [[names[i],
                    None if np.isnan(report.producer_accuracy[i]) else float(report.producer_accuracy[i]),
                    None if np.isnan(report.user_accuracy[i]) else float(report.user_accuracy[i]),
                    int(report.support[i])]
                   for i in range(len(names))])
    _emit(rep, args, args.basename)
    return 0


def cmd_classify_separability(args) -> int:
    cube = _load(args)
    mask = _load_mask(args.mask, args.names)
    sep = cls.separability(cube, mask)
    for pair in sep.pairs:
        a = sep.class_names[pair["class_a"]]
        b = sep.class_names[pair["class_b"]]
        print(f"{a} vs {b}: B={pair['bhattacharyya']:.6f} JM={pair['jeffries_matusita']:.6f}")
    print("band ranking (best first):", ",".join(str(b) for b in sep.band_ranking[:10]))
    if args.csv:
        cls.write_class_spectra_csv(sep, args.csv)
    rep = _new_report("classify-separability", args, {})
    rep.add_table("pairs", ["class_a", "class_b", "bhattacharyya", "jeffries_matusita"],
                  [[p["class_a"], p["class_b"], p["bhattacharyya"], p["jeffries_matusita"]]
                   for p in sep.pairs])
    rep.add_table("band_ranking", ["rank", "band"],
                  [[i, b] for i, b in enumerate(sep.band_ranking)])
    _emit(rep, args, "separability")
    return 0


def cmd_classify_tune(args) -> int:
    cube = _load(args)
    mask = _load_mask(args.mask, args.names)
    _log_seed(args.seed)
    grid = [float(v) for v in args.grid.split(",")]
    if args.kind == "knn":
        grid = [int(v) for v in grid]
    result = cls.grid_search(cube, mask, args.kind, grid,
                             train_fraction=args.fraction, seed=args.seed)
    for row in result["rows"]:
        print(f"{args.kind}={row['value']}: OA={row['overall_accuracy']:.6f} "
              f"kappa={row['kappa']:.6f}")
    print(f"best: {result['best']}")
    rep = _new_report("classify-tune", args, {"kind": args.kind, "grid": args.grid})
    rep.metrics["best"] = result["best"]
    rep.add_table("grid", ["value", "overall_accuracy", "kappa"],
                  [[r["value"], r["overall_accuracy"], r["kappa"]] for r in result["rows"]])
    _emit(rep, args, "tune")
    return 0


def cmd_fuse(args) -> int:
    hx = eio.load_cube(args.hx)
    mx = eio.load_cube(args.mx)
    _log_seed(args.seed)
    if args.preset or args.sensor:
        centers, fwhm = _sensor_from_args(args)
        if hx.header.wavelengths is None:
            raise HxkitError("hx cube has no wavelengths; cannot build the response")
        srf = gaussian_srf(centers, fwhm, np.asarray(hx.header.wavelengths))
        R = srf.weights
    else:
        raise UsageError("provide --preset or --sensor for the spectral response")
    deg = fus.DegradationPair(R=R, spatial_factor=args.factor)
    result = fus.cnmf_fuse(hx, mx, deg, args.p, outer_iters=args.outer,
                           inner_iters=args.inner, seed=args.seed)
    _save(result.fused, args)
    rep = _new_report("fuse-cnmf", args, {
        "p": args.p, "factor": args.factor, "outer": args.outer,
        "inner": args.inner, "seed": args.seed,
    })
    rep.metrics["hx_final_objective"] = result.hx_objectives[-1][-1]
    rep.metrics["mx_final_objective"] = result.mx_objectives[-1][-1]
    if args.reference:
        ref = eio.load_cube(args.reference)
        sam = fus.sam_error_map(result.fused, ref)
        rep.metrics["mean_sam_rad"] = float(np.nanmean(sam))
        rep.metrics["median_sam_rad"] = float(np.nanmedian(sam))
        if args.sam_map:
            _save_image(sam, args.sam_map)
    _emit(rep, args, "fusion")
    return 0


def _training_from_args(args) -> tuple[np.ndarray, np.ndarray]:
    if args.cube:
        cube = eio.load_cube(args.cube)
        return est.load_training_pixels(args.training, cube)
    return est.load_training_table(args.training)


def cmd_regress_fit(args) -> int:
    X, y = _training_from_args(args)
    if args.kind == "plsr":
        model = est.plsr_fit(X, y, int(args.hyper))
    else:
        model = est.ridge_fit(X, y, float(args.hyper))
    est.save_regression_model(model, args.output)
    pred = model.predict(X)
    rmse = float(np.sqrt(np.mean((pred - y) ** 2)))
    print(f"training rmse: {rmse:.6g}")
    return 0


def cmd_regress_cv(args) -> int:
    X, y = _training_from_args(args)
    _log_seed(args.seed)
    grid = [float(v) for v in args.grid.split(",")]
    result = est.cross_validate(X, y, args.kind, grid, k_folds=args.folds,
                                seed=args.seed)
    for row in result["rows"]:
        print(f"hyper={row['hyper']:g}: R2={row['mean_r2']:.6f} RMSE={row['mean_rmse']:.6g}")
    print(f"best: {result['best_hyper']:g}")
    if args.output:
        est.save_regression_model(result["best_model"], args.output)
    rep = _new_report("regress-cv", args, {"kind": args.kind, "grid": args.grid,
                                           "folds": args.folds, "seed": args.seed})
    rep.metrics["best_hyper"] = result["best_hyper"]
    rep.add_table("cv", ["hyper", "mean_r2", "mean_rmse"],
                  [[r["hyper"], r["mean_r2"], r["mean_rmse"]] for r in result["rows"]])
    _emit(rep, args, "regression_cv")
    return 0


def cmd_regress_map(args) -> int:
    cube = _load(args)
    model = est.load_regression_model(args.model)
    _save_image(est.predict_map(model, cube), args.output)
    return 0


def cmd_index(args) -> int:
    cube = _load(args)
    table = dict(est.BUILTIN_INDICES)
    if args.defs:
        table.update(est.read_index_csv(args.defs))
    if args.name not in table:
        raise HxkitError(f"unknown index {args.name!r}; have {sorted(table)}")
    _save_image(est.compute_index(cube, table[args.name]), args.output)
    return 0


def cmd_render(args) -> int:
    cube = _load(args)
    if args.rgb:
        image = rnd.render(cube, rgb=tuple(_parse_int_list(args.rgb)), stretch=args.stretch)
    else:
        image = rnd.render(cube, band=args.band, stretch=args.stretch)
    rnd.write_image(image, args.output)
    return 0


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

_SEEDED_OPS = {"unmix extract", "classify split", "classify tune", "fuse", "regress cv"}


def _step_to_argv(step: dict, defaults: dict) -> list[str]:
    step = dict(step)
    op = step.pop("op", None)
    if not op:
        raise UsageError("pipeline step missing 'op'")
    argv = str(op).split()
    if "input" in step:
        argv.append(str(step.pop("input")))
    if op in _SEEDED_OPS and "seed" not in step and "seed" in defaults:
        step["seed"] = defaults["seed"]
    if "report" not in step and defaults.get("report_dir") and op in (
            "classify evaluate", "classify separability", "classify tune",
            "fuse", "regress cv", "quality", "unmix count"):
        step["report"] = defaults["report_dir"]
    output = step.pop("output", None)
    for key in sorted(step):
        value = step[key]
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                argv.append(flag)
        else:
            argv += [flag, str(value)]
    if output is not None:
        argv += ["-o", str(output)]
    return argv


def cmd_pipeline_run(args) -> int:
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib

    config = tomllib.loads(Path(args.config).read_text())
    steps = config.get("step", [])
    if not steps:
        raise UsageError("pipeline config has no [[step]] entries")
    defaults = {"seed": config.get("seed", DEFAULT_SEED),
                "report_dir": config.get("report_dir")}
    parser = build_parser()
    parsed = []
    for i, step in enumerate(steps):
        argv = _step_to_argv(step, defaults)
        try:
            ns = parser.parse_args(argv)
        except UsageError as exc:
            raise UsageError(f"step {i + 1} ({argv[0]}): {exc}") from exc
        parsed.append((argv, ns))
    for i, (argv, ns) in enumerate(parsed):
        print(f"[hxkit] step {i + 1}/{len(parsed)}: {' '.join(argv)}", file=sys.stderr)
        rc = ns.func(ns)
        if rc != 0:
            return rc
    return 0


# ---------------------------------------------------------------------------
# Parser construction
# ---------------------------------------------------------------------------

def _add_cube_output(p: Parser, required: bool = True) -> None:
    p.add_argument("-o", "--output", required=required, help="output path")
    p.add_argument("--interleave", default="bsq", choices=["bsq", "bil", "bip"])
    p.add_argument("--data-type", dest="data_type", default="f64",
                   choices=["u8", "i16", "u16", "i32", "f32", "f64"])


def _add_input(p: Parser) -> None:
    p.add_argument("input", help="ENVI header path")
    p.add_argument("--data", help="explicit binary data path")
    p.add_argument("--nodata", type=float, default=None)


def build_parser() -> Parser:
    parser = Parser(prog="hxkit", description=__doc__)
    parser.add_argument("--threads", type=int, default=None,
                        help="intra-step parallelism (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", parents=[], help="print header summary")
    _add_input(p)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("subset", help="spatial/spectral subset")
    _add_input(p)
    p.add_argument("--rows", help="row range a:b (half open)")
    p.add_argument("--cols", help="column range a:b")
    p.add_argument("--bands", help="band indices i,j,k")
    _add_cube_output(p)
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("scale", help="multiply values by a factor")
    _add_input(p)
    p.add_argument("--factor", type=float, required=True)
    _add_cube_output(p)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("stats", help="band statistics and scatter pairs")
    _add_input(p)
    p.add_argument("--csv", help="write per-band stats CSV")
    p.add_argument("--scatter", help="band pair i,j for scatter statistics")
    p.add_argument("--scatter-csv", dest="scatter_csv", help="write scatter pairs CSV")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("srf", help="emit Gaussian spectral response weights")
    _add_input(p)
    p.add_argument("--preset", help="built-in sensor name (vnir4)")
    p.add_argument("--sensor", help="sensor definition CSV (center_nm, fwhm_nm)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_srf)

    p = sub.add_parser("resample", help="spectral and/or spatial resampling")
    _add_input(p)
    p.add_argument("--preset")
    p.add_argument("--sensor")
    p.add_argument("--spatial-factor", dest="spatial_factor", type=int, default=0)
    p.add_argument("--psf", default="block_mean", choices=["block_mean", "gaussian"])
    _add_cube_output(p)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("preprocess", help="smoothing, scaling, PCA/MNF")
    _add_input(p)
    p.add_argument("--op", required=True,
                   choices=["savgol", "continuum", "standard", "minmax", "robust",
                            "pca", "mnf", "apply", "inverse"])
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--k", type=int, default=0, help="components (default: all)")
    p.add_argument("--noise-estimator", dest="noise_estimator",
                   default="shift_difference", choices=["shift_difference"])
    p.add_argument("--model-out", dest="model_out", help="save fitted transform JSON")
    p.add_argument("--model", help="transform JSON for op=apply/inverse")
    _add_cube_output(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("quality", help="noise, SNR, bad bands, destriping, whitening, CIBR")
    _add_input(p)
    p.add_argument("--op", required=True,
                   choices=["noise", "snr", "badbands", "destripe", "whiten", "cibr"])
    p.add_argument("--method", default="spectral_decorrelation",
                   choices=["spectral_decorrelation", "spatial_spectral", "homogeneous_roi"])
    p.add_argument("--block", type=int, default=8)
    p.add_argument("--roi", help="ROI label raster (.hdr)")
    p.add_argument("--roi-names", dest="roi_names", help="ROI class-name JSON")
    p.add_argument("--threshold", type=float, default=10.0, help="SNR dB threshold")
    p.add_argument("--sigma-threshold", dest="sigma_threshold", type=float, default=None,
                   help="flag bands by raw sigma instead of SNR")
    p.add_argument("--axis", default="column", choices=["column", "row"])
    p.add_argument("--absorption", type=float, default=940.0)
    p.add_argument("--left", type=float, default=865.0)
    p.add_argument("--right", type=float, default=1025.0)
    p.add_argument("--csv", help="noise profile CSV path")
    p.add_argument("--report", help="report directory")
    p.add_argument("-o", "--output")
    p.add_argument("--interleave", default="bsq", choices=["bsq", "bil", "bip"])
    p.add_argument("--data-type", dest="data_type", default="f64",
                   choices=["u8", "i16", "u16", "i32", "f32", "f64"])
    p.set_defaults(func=cmd_quality)

    unmix = sub.add_parser("unmix", help="material count, endmembers, abundances")
    usub = unmix.add_subparsers(dest="subcommand", required=True)

    p = usub.add_parser("count", help="estimate the number of materials")
    _add_input(p)
    p.add_argument("--pfa", type=float, default=1e-3)
    p.add_argument("--report")
    p.set_defaults(func=cmd_unmix_count)

    p = usub.add_parser("extract", help="endmember extraction")
    _add_input(p)
    p.add_argument("--algo", required=True, choices=["vca", "nfindr", "atgp", "ppi"])
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--skewers", type=int, default=1000)
    p.add_argument("-o", "--output", required=True, help="endmember library CSV")
    p.set_defaults(func=cmd_unmix_extract)

    p = usub.add_parser("abundance", help="abundance estimation")
    _add_input(p)
    p.add_argument("--endmembers", required=True, help="endmember library CSV")
    p.add_argument("--method", default="fcls", choices=["ucls", "nnls", "fcls", "gbm"])
    p.add_argument("--delta", type=float, default=unm.FCLS_DELTA)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--gamma", help="write GBM interaction coefficients (.hdr)")
    p.add_argument("--rmse", help="also write the RMSE map (.hdr)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_unmix_abundance)

    p = usub.add_parser("sparse", help="sparse unmixing against a library")
    _add_input(p)
    p.add_argument("--library", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--constraint", default="nonneg", choices=["nonneg", "nonneg_sum1"])
    p.add_argument("--max-iter", dest="max_iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_unmix_sparse)

    p = usub.add_parser("rmse", help="reconstruction error map")
    _add_input(p)
    p.add_argument("--endmembers", required=True)
    p.add_argument("--abundance", required=True, help="abundance cube (.hdr)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_unmix_rmse)

    classify = sub.add_parser("classify", help="supervised classification")
    csub = classify.add_subparsers(dest="subcommand", required=True)

    p = csub.add_parser("split", help="stratified train/test split")
    p.add_argument("--mask", required=True)
    p.add_argument("--names", required=True)
    p.add_argument("--fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--train-out", dest="train_out", required=True)
    p.add_argument("--test-out", dest="test_out", required=True)
    p.set_defaults(func=cmd_classify_split)

    p = csub.add_parser("train", help="fit a classifier")
    _add_input(p)
    p.add_argument("--mask", required=True)
    p.add_argument("--names", required=True)
    p.add_argument("--kind", required=True, choices=["sam", "gaussian_ml", "knn"])
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--sam-threshold", dest="sam_threshold", type=float, default=None)
    p.add_argument("-o", "--output", required=True, help="model JSON")
    p.set_defaults(func=cmd_classify_train)

    p = csub.add_parser("predict", help="label a cube")
    _add_input(p)
    p.add_argument("--model", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--output", required=True, help="label raster (.hdr)")
    p.set_defaults(func=cmd_classify_predict)

    p = csub.add_parser("evaluate", help="accuracy report")
    p.add_argument("--predicted", required=True)
    p.add_argument("--pred-names", dest="pred_names", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--ref-names", dest="ref_names", required=True)
    p.add_argument("--report", help="report directory")
    p.add_argument("--basename", default="accuracy")
    p.set_defaults(func=cmd_classify_evaluate)

    p = csub.add_parser("separability", help="class/band separability")
    _add_input(p)
    p.add_argument("--mask", required=True)
    p.add_argument("--names", required=True)
    p.add_argument("--csv", help="per-class mean/std spectra CSV")
    p.add_argument("--report")
    p.set_defaults(func=cmd_classify_separability)

    p = csub.add_parser("tune", help="grid search over k / SAM threshold")
    _add_input(p)
    p.add_argument("--mask", required=True)
    p.add_argument("--names", required=True)
    p.add_argument("--kind", required=True, choices=["knn", "sam"])
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--report")
    p.set_defaults(func=cmd_classify_tune)

    p = sub.add_parser("fuse", help="CNMF Hx-Mx fusion")
    p.add_argument("--hx", required=True, help="low-resolution Hx header")
    p.add_argument("--mx", required=True, help="high-resolution Mx header")
    p.add_argument("--preset")
    p.add_argument("--sensor")
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--outer", type=int, default=3)
    p.add_argument("--inner", type=int, default=100)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--reference", help="ground-truth cube for SAM metrics")
    p.add_argument("--sam-map", dest="sam_map", help="write SAM error map (.hdr)")
    p.add_argument("--report")
    _add_cube_output(p)
    p.set_defaults(func=cmd_fuse)

    regress = sub.add_parser("regress", help="regression fit/CV/prediction maps")
    rsub = regress.add_subparsers(dest="subcommand", required=True)

    p = rsub.add_parser("fit", help="fit PLSR or ridge")
    p.add_argument("--training", required=True, help="training CSV")
    p.add_argument("--cube", help="cube for (row, col, target) training CSV")
    p.add_argument("--kind", required=True, choices=["plsr", "ridge"])
    p.add_argument("--hyper", type=float, required=True,
                   help="components (plsr) or alpha (ridge)")
    p.add_argument("-o", "--output", required=True, help="model JSON")
    p.set_defaults(func=cmd_regress_fit)

    p = rsub.add_parser("cv", help="cross-validated hyperparameter sweep")
    p.add_argument("--training", required=True)
    p.add_argument("--cube")
    p.add_argument("--kind", required=True, choices=["plsr", "ridge"])
    p.add_argument("--grid", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--report")
    p.add_argument("-o", "--output", help="best model JSON")
    p.set_defaults(func=cmd_regress_cv)

    p = rsub.add_parser("map", help="per-pixel prediction image")
    _add_input(p)
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_regress_map)

    p = sub.add_parser("index", help="two-wavelength spectral indices")
    _add_input(p)
    p.add_argument("--name", required=True)
    p.add_argument("--defs", help="user index CSV (name, kind, lambda_a, lambda_b)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("render", help="8-bit quick-look image")
    _add_input(p)
    p.add_argument("--band", type=int)
    p.add_argument("--rgb", help="band triplet i,j,k")
    p.add_argument("--stretch", default="minmax", choices=["minmax", "stddev2"])
    p.add_argument("-o", "--output", required=True, help=".pgm/.ppm/.png path")
    p.set_defaults(func=cmd_render)

    pipeline = sub.add_parser("pipeline", help="run a TOML pipeline config")
    psub = pipeline.add_subparsers(dest="subcommand", required=True)
    p = psub.add_parser("run")
    p.add_argument("config", help="TOML file with [[step]] tables")
    p.set_defaults(func=cmd_pipeline_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (HxkitError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
