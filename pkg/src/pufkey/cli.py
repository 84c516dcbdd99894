"""Command-line pipeline: generate or ingest RO data, analyze, design, enroll,
reconstruct, evaluate, and tabulate rate regions.

Every artifact lives in ``--out`` and every report embeds the hash of the
effective configuration.  Exit codes: 0 success, 2 validation error,
3 infeasible design, 4 decode failure or key mismatch.
"""

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import bch, fcs, metrics, quantizer, rates, source, transform
from .polar import wz
from .seeding import rng

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_DECODE = 0, 2, 3, 4

DEFAULT_CONFIG = {
    "seed": 0,
    "mode": "test",
    "dataset": None,
    "source": {"rows": 16, "cols": 16, "variance": 1.0, "rho": 0.7,
               "noise_variance": 3e-4, "mean": 0.0, "devices": 100, "measurements": 2},
    "transform": "dct",
    "quantizer": {"c_max": [16, 17, 18, 19, 20], "target_pb": 1e-9, "k_max": 8},
    "scheme": "FCS-BCH",
    "fcs": {"key_length": 128},
    "wz": {"n": 1024, "key_length": 128, "p_A": 0.15, "target_pb": 1e-3, "list_size": 8,
           "p_c": None, "construction_p": None, "mc_trials": 20000, "vq_trials": 200},
    "evaluate": {"trials": 1000, "confidence": 0.95, "grid": 101},
}

TABLE1_HEADER = ["transform", "eta_c", "eta_c_model"]
TABLE2_HEADER = ["c_max", "threshold", "k_max", "n", "e", "d_min_required", "feasible"]
REGION_HEADER = ["q", "R_s", "R_ell", "R_w"]
POINTS_HEADER = ["label", "R_s", "R_ell", "R_w"]


class CLIError(Exception):
    def __init__(self, message, code=EXIT_INVALID):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- plumbing


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, seed=None):
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        p = Path(path)
        if not p.exists():
            raise CLIError(f"config file {p} does not exist")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise CLIError(f"config {p}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise CLIError(f"config {p}: top level must be an object")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise CLIError(f"config {p}: unknown keys {sorted(unknown)}")
        cfg = _merge(cfg, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    if not 0 <= int(cfg["seed"]) < 2**64:
        raise CLIError("seed must be an unsigned 64-bit integer")
    if cfg["scheme"] not in ("FCS-BCH", "WZ-polar"):
        raise CLIError(f"scheme must be FCS-BCH or WZ-polar, got {cfg['scheme']!r}")
    if cfg["mode"] not in ("test", "production"):
        raise CLIError("mode must be 'test' or 'production'")
    try:
        transform.Kind(cfg["transform"])
    except ValueError:
        raise CLIError(f"unknown transform {cfg['transform']!r}") from None
    if cfg["dataset"] and not Path(cfg["dataset"]).exists():
        raise CLIError(f"dataset {cfg['dataset']} does not exist")
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_atomic(path, data):
    """Write text or bytes via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
    return path


def write_json(path, obj):
    return write_atomic(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_table(path, header, rows, fmt, meta=None):
    """CSV (header + rows) or JSON ``{meta..., rows: [{...}]}``; returns the path."""
    path = Path(path).with_suffix("." + fmt)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        write_atomic(path, buf.getvalue())
    else:
        obj = dict(meta or {})
        obj["rows"] = [dict(zip(header, r)) for r in rows]
        write_json(path, obj)
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _read_json(path, what):
    p = Path(path)
    if not p.exists():
        raise CLIError(f"missing {what} ({p}); run the earlier pipeline step first")
    return json.loads(p.read_text())


# ---------------------------------------------------------------- data access


def _source_params(cfg):
    s = cfg["source"]
    return source.default_params(s["rows"], s["cols"], s["variance"], s["rho"],
                                 s["noise_variance"], s["mean"])


def _dataset(cfg, out):
    p = out / "dataset.csv"
    if not p.exists():
        if cfg["dataset"]:
            p = Path(cfg["dataset"])
        else:
            raise CLIError(f"no dataset in {out}; run 'gen' or 'ingest' first")
    return source.ingest_csv(p)


def _load_model(out):
    p = out / "model.npz"
    if not p.exists():
        raise CLIError(f"missing source model ({p}); run 'analyze' first")
    with np.load(p) as z:
        return {k: z[k] for k in z.files}


def _plan_and_models(cfg, model):
    rows, cols = int(model["rows"]), int(model["cols"])
    plan = transform.make_plan(cfg["transform"], rows, cols,
                               model["cov"] if cfg["transform"] == "klt" else None)
    models = quantizer.coefficient_models(plan.matrix(), model["mean"], model["cov"],
                                          float(model["noise_variance"]))
    return plan, models


def _fcs_design(out):
    d = _read_json(out / "design.json", "design")
    if d.get("scheme") != "FCS-BCH":
        raise CLIError("design.json is not an FCS-BCH design")
    qd = quantizer.QuantizerDesign.from_json(d["quantizer"])
    return d, qd, bch.bch_by_name(d["code"])


def _wz_spec(out):
    return wz.NestedPolarSpec.from_json(_read_json(out / "spec.json", "nested polar spec"))


def _device_array(cfg, ds, device, measurement):
    if not 0 <= device < len(ds.devices):
        raise CLIError(f"device {device} not in dataset of {len(ds.devices)} devices")
    d = ds.devices[device]
    if measurement == 0:
        return d.noiseless
    if measurement <= len(d.measurements):
        return d.measurements[measurement - 1]
    return source.measure(d.noiseless, ds.params, rng(cfg["seed"], "measure", device, measurement))


def _fcs_bits(qd, models, plan, arr, length):
    bits = quantizer.extract_bits(qd, models, transform.forward(plan, arr))
    return bits[..., :length]


def _wz_source(cfg, spec, device):
    return rng(cfg["seed"], "wz-source", device).integers(0, 2, spec.n, dtype=np.uint8)


def _wz_reading(cfg, spec, device, measurement):
    x = _wz_source(cfg, spec, device)
    if measurement == 0:
        return x
    noise = rng(cfg["seed"], "wz-noise", device, measurement).random(spec.n) < cfg["wz"]["p_A"]
    return x ^ noise.astype(np.uint8)


def _chosen_secret(cfg, device, k):
    return rng(cfg["seed"], "key", device).integers(0, 2, k, dtype=np.uint8)


def _key_digest(salt_hex, key):
    return hashlib.sha256(bytes.fromhex(salt_hex) + np.packbits(key).tobytes()
                          + len(key).to_bytes(4, "big")).hexdigest()


# ---------------------------------------------------------------- commands


def cmd_gen(cfg, out, args):
    s = cfg["source"]
    params = _source_params(cfg)
    ds = source.generate_synthetic(params, s["devices"], s["measurements"], cfg["seed"])
    buf_path = out / "dataset.csv"
    out.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".dataset.", suffix=".csv")
    os.close(fd)
    try:
        source.write_csv(ds, tmp, sidecar=False)
        os.replace(tmp, buf_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    write_json(out / "dataset.json", {"r": params.rows, "c": params.cols,
                                      "noise_variance": params.noise_variance})
    write_json(out / "gen_report.json", {"config_hash": config_hash(cfg), "devices": s["devices"],
                                         "measurements": s["measurements"], "l": params.size})
    print(f"wrote {buf_path} ({s['devices']} devices, {s['measurements']} noisy measurements)")
    return EXIT_OK


def cmd_ingest(cfg, out, args):
    path = args.csv or cfg["dataset"]
    if not path:
        raise CLIError("ingest needs --csv or a 'dataset' entry in the config")
    ds = source.ingest_csv(path, args.rows, args.cols)
    p = ds.params
    out.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".dataset.", suffix=".csv")
    os.close(fd)
    source.write_csv(ds, tmp, sidecar=False)
    os.replace(tmp, out / "dataset.csv")
    write_json(out / "dataset.json", {"r": p.rows, "c": p.cols, "noise_variance": p.noise_variance})
    write_json(out / "ingest_report.json", {
        "config_hash": config_hash(cfg), "source": str(path), "devices": len(ds.devices),
        "measurements": [len(d.measurements) for d in ds.devices], "l": p.size,
        "noise_variance": p.noise_variance})
    print(f"ingested {len(ds.devices)} devices of {p.rows}x{p.cols} ROs from {path}")
    return EXIT_OK


def cmd_analyze(cfg, out, args):
    ds = _dataset(cfg, out)
    p = ds.params
    try:
        stats = source.estimate_statistics(ds, require_noise=False)
    except source.EstimationError as exc:
        raise CLIError(str(exc)) from None
    noise = stats.estimated_noise_variance
    if not any(len(d.measurements) >= 2 for d in ds.devices):
        noise = p.noise_variance
    X = ds.noiseless
    # exact model covariance is known only for data this tool generated
    model_cov = None
    if (out / "gen_report.json").exists() and not cfg["dataset"]:
        model_cov = _source_params(cfg).autocovariance
        if model_cov.shape != (p.size, p.size):
            model_cov = None
    rows = []
    for kind in transform.Kind:
        if kind in (transform.Kind.DWHT, transform.Kind.DHT) and not (
                transform._is_pow2(p.rows) and transform._is_pow2(p.cols)):
            continue
        plan = transform.make_plan(kind, p.rows, p.cols,
                                   stats.sample_autocovariance if kind is transform.Kind.KLT else None)
        T = transform.forward(plan, X)
        c_tt = np.cov(T, rowvar=False, ddof=1)
        try:
            eta = transform.decorrelation_efficiency(c_tt, stats.sample_autocovariance)
        except transform.UndefinedMetric as exc:
            raise CLIError(f"decorrelation efficiency undefined: {exc}") from None
        eta_model = ""
        if model_cov is not None:
            basis = transform.fit_klt(model_cov) if kind is transform.Kind.KLT else None
            mplan = transform.TransformPlan(kind, p.rows, p.cols, basis)
            eta_model = float(transform.decorrelation_efficiency(
                transform.coefficient_covariance(mplan, model_cov), model_cov))
        rows.append((kind.value, float(eta), eta_model))
    buf = io.BytesIO()
    np.savez(buf, mean=stats.sample_mean, cov=stats.sample_autocovariance,
             noise_variance=np.float64(noise), rows=p.rows, cols=p.cols)
    write_atomic(out / "model.npz", buf.getvalue())
    table = write_table(out / "table1", TABLE1_HEADER, rows, args.format,
                        {"config_hash": config_hash(cfg)})
    write_json(out / "analysis.json", {
        "config_hash": config_hash(cfg), "devices": len(ds.devices), "rows": p.rows,
        "cols": p.cols, "estimated_noise_variance": noise,
        "mean_of_means": float(stats.sample_mean.mean()),
        "mean_variance": float(np.trace(stats.sample_autocovariance) / p.size),
        "eta_c": {r[0]: r[1] for r in rows},
        "eta_c_model": {r[0]: r[2] for r in rows if r[2] != ""}})
    for name, eta, eta_model in rows:
        extra = f"  (model covariance {eta_model:.6f})" if eta_model != "" else ""
        print(f"{name:5s} eta_c = {eta:.6f} on the sample covariance{extra}")
    print(f"wrote {table}")
    return EXIT_OK


def select_fcs_code(models, design_rows, key_length, target_pb):
    """Pick a BCH code for the quantizer designs in ``design_rows``.

    First choice: the highest-rate code that corrects the worst case
    ``e(C_max)`` of some design.  Otherwise fall back to one bit per
    coefficient and accept the highest-rate code whose exact block-error
    probability meets ``target_pb``.  Returns a dict or ``None``.
    """
    best = None
    for qd in design_rows:
        if qd.n < key_length:
            continue
        for m in range(3, 11):
            if (1 << m) - 1 > qd.n:
                break
            for n_c, k_c, t in bch.bch_table(m):
                if k_c >= key_length and t >= qd.e and (best is None or k_c / n_c > best["rate"]):
                    best = {"method": "worst-case", "code": f"bch_{n_c}_{k_c}", "n": n_c, "k": k_c,
                            "t": t, "rate": k_c / n_c, "quantizer": qd}
    if best is not None:
        qd = best["quantizer"]
        best["p_b"] = block_error_for(models, qd, best["n"], best["t"])
        return best
    # one bit per coefficient, most reliable coefficients first
    used = np.arange(1, len(models))
    pc1 = np.array([quantizer.correctness_probability(1, models[i].noise_std)
                    if np.isfinite(models[i].noise_std) else 0.0 for i in used])
    m = int(np.log2(len(used) + 1))
    n_c = (1 << m) - 1
    if m < 3 or n_c < key_length:
        return None
    keep = used[np.argsort(-pc1, kind="stable")[:n_c]]
    bits = [0] * len(models)
    for i in keep:
        bits[i] = 1
    qd = quantizer.QuantizerDesign(0, float("nan"), target_pb, tuple(bits), n_c, 0)
    for _, k_c, t in sorted(bch.bch_table(m), key=lambda r: -r[1]):
        if k_c < key_length:
            continue
        p_b = block_error_for(models, qd, n_c, t)
        if p_b <= target_pb:
            return {"method": "exact-one-bit", "code": f"bch_{n_c}_{k_c}", "n": n_c, "k": k_c,
                    "t": t, "rate": k_c / n_c, "quantizer": qd, "p_b": p_b}
    return None


def block_error_for(models, qd, n_code, t):
    """Exact block-error probability of the first ``n_code`` bits of a design
    when a coefficient in error flips all of its bits."""
    pcs, weights = [], []
    remaining = n_code
    for i, K in enumerate(qd.bits):
        if K == 0 or remaining == 0:
            continue
        w = min(K, remaining)
        pcs.append(quantizer.correctness_probability(K, models[i].noise_std))
        weights.append(w)
        remaining -= w
    return fcs.block_error_exact(fcs.ErrorProfile(np.array(pcs), np.array(weights)), t)


def cmd_design(cfg, out, args):
    h = config_hash(cfg)
    if cfg["scheme"] == "WZ-polar":
        return _design_wz(cfg, out, args, h)
    model = _load_model(out)
    plan, models = _plan_and_models(cfg, model)
    qcfg = cfg["quantizer"]
    c_values = qcfg["c_max"] if isinstance(qcfg["c_max"], list) else [qcfg["c_max"]]
    key_length = cfg["fcs"]["key_length"]
    designs, rows = [], []
    for c in c_values:
        try:
            qd = quantizer.allocate_bits(models, int(c), qcfg["target_pb"], qcfg["k_max"])
        except quantizer.DesignError as exc:
            raise CLIError(str(exc)) from None
        designs.append(qd)
        rows.append((qd.c_max, qd.threshold, qd.k_max, qd.n, qd.e, qd.d_min_required,
                     qd.n >= key_length))
    table = write_table(out / "table2", TABLE2_HEADER, rows, args.format, {"config_hash": h})
    for r in rows:
        print("C_max=%d  P_c=%.4f  K_max=%d  n=%d  e=%d" % r[:5])
    report = {"config_hash": h, "scheme": "FCS-BCH", "transform": cfg["transform"],
              "key_length": key_length, "target_pb": qcfg["target_pb"],
              "table": [dict(zip(TABLE2_HEADER, r)) for r in rows]}
    if all(qd.n == 0 for qd in designs):
        verdict = "infeasible: every coefficient has K_i = 0 (noise too strong for the threshold)"
    elif all(qd.n < key_length for qd in designs):
        verdict = f"infeasible: n(C_max) is below the key length {key_length} for every C_max"
    else:
        verdict = None
    chosen = None if verdict else select_fcs_code(models, designs, key_length, qcfg["target_pb"])
    if chosen is None:
        verdict = verdict or f"infeasible: no BCH code with k >= {key_length} meets P_B <= {qcfg['target_pb']:g}"
        report["verdict"] = verdict
        write_json(out / "design_report.json", report)
        raise CLIError(verdict, EXIT_INFEASIBLE)
    qd = chosen.pop("quantizer")
    report.update({"verdict": "feasible", "code": chosen["code"], "selection": chosen,
                   "quantizer": qd.to_json(), "quantizer_hash": qd.content_hash()})
    write_json(out / "design.json", report)
    write_json(out / "design_report.json", report)
    print(f"chosen code {chosen['code']} ({chosen['method']}), t={chosen['t']}, "
          f"exact P_B = {chosen['p_b']:.3g}")
    print(f"wrote {table}")
    return EXIT_OK


def _design_wz(cfg, out, args, h):
    w = cfg["wz"]
    try:
        spec, report = wz.design_nested(
            w["n"], w["key_length"], w["p_A"], w["target_pb"], seed=cfg["seed"],
            list_size=w["list_size"], construction_p=w["construction_p"],
            mc_trials=w["mc_trials"], vq_trials=w["vq_trials"], p_c=w["p_c"])
    except wz.InfeasibleDesign as exc:
        rep = exc.report.to_json()
        rep["config_hash"] = h
        write_json(out / "design_report.json", rep)
        raise CLIError(f"infeasible: {exc}", EXIT_INFEASIBLE) from None
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    rep = report.to_json()
    rep["config_hash"] = h
    rep["scheme"] = "WZ-polar"
    rep["spec_hash"] = spec.spec_hash()
    write_json(out / "spec.json", spec.to_json())
    write_json(out / "design_report.json", rep)
    rs, rw = spec.rates
    print(f"p_c = {report.p_c:.4f} ({report.p_c_method}), E[q] = {report.e_q:.4f}, "
          f"m1 = {spec.m1}, m2 = {spec.m2}, key = {spec.key_length}, (R_s, R_w) = ({rs:.3f}, {rw:.3f})")
    return EXIT_OK


def cmd_enroll(cfg, out, args):
    device = args.device
    if cfg["scheme"] == "WZ-polar":
        spec = _wz_spec(out)
        enr = wz.wz_enroll(spec, _wz_source(cfg, spec, device), spec.design["e_q"])
        record = enr.record(spec)
        key = enr.secret
    else:
        ds = _dataset(cfg, out)
        d, qd, code = _fcs_design(out)
        plan, models = _plan_and_models(cfg, _load_model(out))
        x = _fcs_bits(qd, models, plan, _device_array(cfg, ds, device, 0), code.n)
        key = _chosen_secret(cfg, device, code.k)
        record = fcs.fcs_enroll(code, x, key, d["quantizer_hash"]).to_json()
    record["config_hash"] = config_hash(cfg)
    path = write_json(out / "enroll" / f"device_{device}.json", record)
    if cfg["mode"] == "test":
        salt = rng(cfg["seed"], "salt", device).bytes(16).hex()
        write_json(out / "verify" / f"device_{device}.json",
                   {"salt": salt, "sha256": _key_digest(salt, key)})
    if args.unsafe_dump_key:
        write_atomic(out / "keys" / f"device_{device}.hex", fcs.pack_bits(key) + "\n")
    print(f"enrolled device {device}: {path}")
    return EXIT_OK


def _load_record(out, device):
    rec = _read_json(out / "enroll" / f"device_{device}.json", f"enrollment for device {device}")
    try:
        bytes.fromhex(rec["helper_hex"])
    except (KeyError, ValueError):
        raise CLIError(f"enrollment record for device {device} is malformed") from None
    if len(rec["helper_hex"]) != 2 * ((int(rec["n_bits"]) + 7) // 8):
        raise CLIError(f"enrollment record for device {device} has the wrong helper length")
    return rec


def cmd_reconstruct(cfg, out, args):
    device, meas = args.device, args.measurement
    helper_dev = device if args.helper_device is None else args.helper_device
    rec = _load_record(out, helper_dev)
    if cfg["scheme"] == "WZ-polar":
        spec = _wz_spec(out)
        try:
            helper = wz.helper_from_record(spec, rec)
        except ValueError as exc:
            raise CLIError(str(exc)) from None
        y = _wz_reading(cfg, spec, device, meas)
        p_total = rates.star(spec.design["e_q"], cfg["wz"]["p_A"])
        key = wz.wz_reconstruct(spec, y, helper, p_total)
    else:
        ds = _dataset(cfg, out)
        d, qd, code = _fcs_design(out)
        record = fcs.EnrollmentRecord.from_json(rec)
        if record.code != code.name or record.quantizer_hash != d["quantizer_hash"]:
            raise CLIError("enrollment record does not match the current design")
        plan, models = _plan_and_models(cfg, _load_model(out))
        y = _fcs_bits(qd, models, plan, _device_array(cfg, ds, device, meas), code.n)
        key = fcs.fcs_reconstruct(code, record, y)
    if key is None:
        verdict = "failure"
    elif cfg["mode"] == "production":
        verdict = "decoded"
    else:
        ver = _read_json(out / "verify" / f"device_{helper_dev}.json", "verification hash")
        verdict = "match" if _key_digest(ver["salt"], key) == ver["sha256"] else "mismatch"
    if key is not None and args.unsafe_dump_key:
        write_atomic(out / "keys" / f"device_{device}_m{meas}.hex", fcs.pack_bits(key) + "\n")
    write_json(out / "reconstruct" / f"device_{device}_m{meas}_h{helper_dev}.json",
               {"config_hash": config_hash(cfg), "device": device, "measurement": meas,
                "helper_device": helper_dev, "verdict": verdict})
    print(f"device {device} measurement {meas} (helper of device {helper_dev}): {verdict}")
    return EXIT_OK if verdict in ("match", "decoded") else EXIT_DECODE


def _gap_gs(p_a, r_s, r_w, grid):
    """Largest GS key rate at storage <= r_w minus the achieved key rate."""
    b = rates.gs_region_boundary(p_a, np.linspace(0, 0.5, grid))
    ok = b.storage <= r_w + 1e-12
    best = float(b.key[ok].max()) if ok.any() else 0.0
    return best - r_s


def cmd_evaluate(cfg, out, args):
    ecfg = cfg["evaluate"]
    trials = args.trials if args.trials is not None else ecfg["trials"]
    seed = cfg["seed"]
    t0 = time.perf_counter()
    report = {"config_hash": config_hash(cfg), "scheme": cfg["scheme"],
              "ci_method": f"wilson-{ecfg['confidence']}"}
    if cfg["scheme"] == "WZ-polar":
        spec = _wz_spec(out)
        n_dev = cfg["source"]["devices"]
        if n_dev < 2:
            raise CLIError("uniqueness needs at least 2 devices")
        bits = np.vstack([_wz_source(cfg, spec, i) for i in range(n_dev)])
        p_a = cfg["wz"]["p_A"]
        errors, done, dist = wz.key_error_trials(spec, p_a, trials, seed)
        rs, rw = spec.rates
        tuple_ = {"R_s": rs, "R_ell": rw, "R_w": rw}
        region = rates.gs_region_boundary(p_a, np.linspace(0, 0.5, ecfg["grid"]))
        report["mean_distortion"] = dist
        report["region_gap"] = {"model": "GS", "p_A": p_a,
                                "key_rate_gap": _gap_gs(p_a, rs, rw, ecfg["grid"])}
        label = f"nested_polar_{spec.n}_{spec.key_length}_{spec.m2}"
    else:
        ds = _dataset(cfg, out)
        if len(ds.devices) < 2:
            raise CLIError("uniqueness needs at least 2 devices")
        d, qd, code = _fcs_design(out)
        plan, models = _plan_and_models(cfg, _load_model(out))
        bits = _fcs_bits(qd, models, plan, ds.noiseless, code.n)
        keys = [_chosen_secret(cfg, i, code.k) for i in range(len(ds.devices))]
        helpers = [fcs.fcs_enroll(code, bits[i], keys[i]) for i in range(len(ds.devices))]
        errors = flips = 0
        for t in range(trials):
            i = t % len(ds.devices)
            arr = source.measure(ds.devices[i].noiseless, ds.params, rng(seed, "trials", "fcs", t))
            y = _fcs_bits(qd, models, plan, arr, code.n)
            flips += int(np.count_nonzero(y != bits[i]))
            k_hat = fcs.fcs_reconstruct(code, helpers[i], y)
            errors += k_hat is None or bool(np.any(k_hat != keys[i]))
        done = trials
        p_hat = flips / (trials * code.n) if trials else 0.0
        rs, rl = rates.code_point_fcs(code.n, code.k)
        tuple_ = {"R_s": rs, "R_ell": rl, "R_w": 1.0}
        best_rs, best_rl = rates.fcs_region_point(min(p_hat, 0.5))
        region = rates.fcs_region_boundary(min(p_hat, 0.5), np.linspace(0, 0.5, ecfg["grid"]))
        report["bit_error_rate"] = p_hat
        report["region_gap"] = {"model": "FCS", "p": p_hat, "key_rate_gap": best_rs - rs,
                                "leakage_gap": rl - best_rl}
        label = code.name
    u_mean, u_var = metrics.uniqueness(bits)
    report["uniqueness"] = {"mean": u_mean, "variance": u_var, "devices": int(bits.shape[0]),
                            "bits": int(bits.shape[1])}
    if done:
        lo, hi = metrics.wilson_interval(errors, done, ecfg["confidence"])
        report["key_error"] = {"errors": int(errors), "trials": int(done), "rate": errors / done,
                               "ci": [lo, hi]}
    report["rate_tuple"] = tuple_
    report["runtime_s"] = time.perf_counter() - t0
    write_table(out / "evaluation_region", REGION_HEADER, region.rows(), args.format,
                {"model": region.model, "p_A": region.p_a})
    write_table(out / "evaluation_points", POINTS_HEADER,
                [(label, tuple_["R_s"], tuple_["R_ell"], tuple_["R_w"])], args.format)
    write_json(out / "evaluation.json", report)
    if args.dump_bits:
        write_atomic(out / "bits.txt", "".join("".join(map(str, row)) + "\n" for row in bits))
    print(f"uniqueness mean {u_mean:.4f} variance {u_var:.2e} over {bits.shape[0]} devices")
    if done:
        print(f"key errors {errors}/{done} (95% CI {lo:.2e}..{hi:.2e})")
    return EXIT_OK


def _parse_ints(text, count, what):
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise CLIError(f"{what} must be {count} comma-separated integers, got {text!r}") from None
    if len(vals) != count:
        raise CLIError(f"{what} must be {count} comma-separated integers, got {text!r}")
    return vals


def cmd_rates(cfg, out, args):
    model = args.model.upper()
    if model not in rates.REGIONS:
        raise CLIError(f"model must be one of {sorted(rates.REGIONS)}")
    if not 0 <= args.p_a <= 0.5:
        raise CLIError("p_A must lie in [0, 0.5]")
    if args.grid < 2:
        raise CLIError("grid needs at least 2 points")
    region = rates.REGIONS[model](args.p_a, np.linspace(0.0, 0.5, args.grid))
    meta = {"model": model, "p_A": args.p_a, "config_hash": config_hash(cfg)}
    path = write_table(out / f"region_{model.lower()}", REGION_HEADER, region.rows(),
                       args.format, meta)
    if args.format == "csv":
        write_json(out / f"region_{model.lower()}.header.json", meta)
    points = []
    for text in args.fcs_code or []:
        n_c, k_c = _parse_ints(text, 2, "--fcs-code")
        try:
            rs, rl = rates.code_point_fcs(n_c, k_c)
        except ValueError as exc:
            raise CLIError(str(exc)) from None
        points.append((f"fcs_{n_c}_{k_c}", rs, rl, 1.0))
    for text in args.wz_code or []:
        n, key, m2 = _parse_ints(text, 3, "--wz-code")
        if not (0 < key <= n and 0 <= m2 <= n - key):
            raise CLIError(f"--wz-code {text}: need 0 < key <= n and m2 <= n - key")
        t = rates.code_point_wz(n, key, m2)
        points.append((f"wz_{n}_{key}_{m2}", t.key, t.leakage, t.storage))
    if points:
        write_table(out / "code_points", POINTS_HEADER, points, args.format, meta)
    print(f"wrote {path}" + (f" and {len(points)} code points" if points else ""))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "ingest": cmd_ingest, "analyze": cmd_analyze,
            "design": cmd_design, "enroll": cmd_enroll, "reconstruct": cmd_reconstruct,
            "evaluate": cmd_evaluate, "rates": cmd_rates}


GLOBAL_DEFAULTS = {"config": None, "seed": None, "out": "out", "format": "csv"}


def build_parser():
    # global flags may sit before or after the verb; defaults are filled in
    # after parsing so a subparser never overwrites a value given earlier
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="override the configured seed (u64)")
    common.add_argument("--out", help="artifact directory (default: out)")
    common.add_argument("--format", choices=("csv", "json"), help="format of emitted tables")
    parser = argparse.ArgumentParser(prog="pufkey", parents=[common],
                                     description="Secret keys from RO PUF outputs.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate a synthetic RO dataset")
    p = sub.add_parser("ingest", parents=[common], help="read an RO measurement CSV")
    p.add_argument("--csv", help="measurement file (default: config 'dataset')")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    sub.add_parser("analyze", parents=[common], help="source statistics and decorrelation table")
    sub.add_parser("design", parents=[common], help="quantizer/code or nested polar design")
    for name in ("enroll", "reconstruct"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--device", type=int, default=0)
        p.add_argument("--unsafe-dump-key", action="store_true",
                       help="also write the key in clear (testing only)")
        if name == "reconstruct":
            p.add_argument("--measurement", type=int, default=1)
            p.add_argument("--helper-device", type=int,
                           help="use the helper data enrolled for another device")
    p = sub.add_parser("evaluate", parents=[common], help="uniqueness and key-error Monte Carlo")
    p.add_argument("--trials", type=int)
    p.add_argument("--dump-bits", action="store_true", help="write extracted bits to bits.txt")
    p = sub.add_parser("rates", parents=[common], help="rate-region boundary and code points")
    p.add_argument("--model", default="GS", help="FCS, GS or CS")
    p.add_argument("--p-a", type=float, default=0.15)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--fcs-code", action="append", metavar="N,K")
    p.add_argument("--wz-code", action="append", metavar="N,KEY,M2")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    for name, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, value)
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (source.RejectedInput, source.CSVParseError, source.EstimationError,
            transform.TransformError, quantizer.DesignError, quantizer.FitError,
            bch.UnsupportedCode) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
