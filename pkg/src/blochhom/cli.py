"""Command-line front end: mesh / bands / homogenize / classify / respond / verify.

Runs are driven either by flags or by a JSON configuration with an explicit
schema version; every artifact directory receives a manifest carrying the
configuration hash and the package version so outputs are reproducible.
All quantities are dimensionless; band CSVs are additionally reported with
the normalizations k0 = pi/a and w0 = sqrt(G / (rho a^2)) applied at this
layer only.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance, dirac, effective, homog, meshing, response
from .bloch import MaterialFields, assemble, band_sweep, solve_bands
from .cells import cluster_context
from .errors import BlochhomError, ConfigError
from .geometry import KPath, sample_path, path_parameter

SCHEMA_VERSION = 1


def _load_config(path):
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {SCHEMA_VERSION}")
    return cfg


def _config_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _write_manifest(outdir, cfg, artifacts):
    manifest = {"version": __version__, "config_hash": _config_hash(cfg),
                "config": cfg, "artifacts": sorted(artifacts)}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def _geometry_spec(cfg):
    geom = cfg.get("geometry", {})
    kind = geom.get("kind", "kagome")
    h = float(geom.get("h_max", 0.12))
    order = int(geom.get("order", 2))
    if kind == "kagome":
        return meshing.kagome_spec(a=float(geom.get("a", 1.0)),
                                   hinge=float(geom.get("hinge", 0.04)),
                                   h_max=h, order=order)
    if kind == "pinned":
        return meshing.pinned_square_spec(a=float(geom.get("a", 1.0)),
                                          diameter=float(geom.get("diameter", 0.25)),
                                          h_max=h, order=order)
    if kind == "empty":
        return meshing.empty_cell_spec(h_max=h, order=order)
    raise ConfigError(f"unknown geometry kind {kind!r}")


def _mesh_from_config(cfg):
    if "mesh_file" in cfg:
        path = Path(cfg["mesh_file"])
        if not path.exists():
            raise ConfigError(f"mesh file {path} does not exist")
        return meshing.import_mesh(path.read_text())
    return meshing.generate_mesh(_geometry_spec(cfg))


def _materials(cfg):
    mat = cfg.get("material", {})
    return MaterialFields(G=float(mat.get("G", 1.0)), rho=float(mat.get("rho", 1.0)))


def _parse_vec(text):
    return [float(v) for v in text.replace(",", " ").split()]


def cmd_mesh(args):
    cfg = {"schema_version": SCHEMA_VERSION,
           "geometry": {"kind": args.geometry, "h_max": args.hmax, "order": args.order}}
    if args.geometry == "file":
        mesh = meshing.import_mesh(Path(args.input).read_text())
        cfg = {"schema_version": SCHEMA_VERSION, "mesh_file": args.input}
    else:
        mesh = meshing.generate_mesh(_geometry_spec(cfg))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "mesh.txt").write_text(meshing.export_mesh(mesh))
    stats = {"nodes": mesh.n_nodes, "elements": mesh.n_elements,
             "porosity": mesh.porosity, "order": mesh.order}
    (outdir / "mesh_stats.json").write_text(json.dumps(stats, indent=1))
    _write_manifest(outdir, cfg, ["mesh.txt", "mesh_stats.json"])
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements, "
          f"porosity {mesh.porosity:.4f}")
    return 0


def cmd_bands(args):
    cfg = _load_config(args.config)
    mesh = _mesh_from_config(cfg)
    mats = _materials(cfg)
    lat = mesh.lattice
    pcfg = cfg.get("path", {})
    if "file" in pcfg:
        from .geometry import read_kpath_file
        waypoints = read_kpath_file(Path(pcfg["file"]).read_text(), lat)
    else:
        waypoints = [lat.kpoint(w) for w in
                     pcfg.get("waypoints", [[0.5, 0], [0, 0], [0.5, 0.5], [0.5, 0]])]
    path = KPath(waypoints, samples_per_segment=int(pcfg.get("samples_per_segment", 40)))
    pts = sample_path(path)
    n_max = int(cfg.get("n_max", 10))
    lams = band_sweep(mesh, mats, pts, n_max)
    a = float(cfg.get("geometry", {}).get("a", 1.0))
    k0 = np.pi / a
    w0 = np.sqrt(mats.G / (mats.rho * a**2)) if np.isscalar(mats.G) else 1.0
    s = path_parameter(pts)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    header = "s_over_k0,k1,k2," + ",".join(f"omega{j + 1}_over_w0" for j in range(n_max))
    rows = [header]
    for i, p in enumerate(pts):
        om = np.sqrt(np.maximum(lams[i], 0.0)) / w0
        rows.append(",".join([repr(float(s[i] / k0)), repr(float(p.components[0])),
                              repr(float(p.components[1]))]
                             + [repr(float(v)) for v in om]))
    (outdir / "bands.csv").write_text("\n".join(rows) + "\n")
    _write_manifest(outdir, cfg, ["bands.csv"])
    print(f"bands: {len(pts)} k-points x {n_max} branches -> {outdir / 'bands.csv'}")
    return 0


def cmd_homogenize(args):
    cfg = _load_config(args.config) if args.config else {"schema_version": SCHEMA_VERSION}
    mesh = _mesh_from_config(cfg)
    mats = _materials(cfg)
    lat = mesh.lattice
    ks = lat.kpoint(_parse_vec(args.ks))
    khat = np.array(_parse_vec(args.direction))
    khat = khat / np.linalg.norm(khat)
    branches = [int(b) for b in args.branch.split(",")]
    n_hi = max(branches)
    ops = assemble(mesh, mats, ks)
    pairs = solve_bands(ops, n_hi + 2)
    members = [pairs[b - 1] for b in branches]
    ctx = cluster_context(ops, members)
    order = args.order if ctx.Q == 1 else min(args.order, 1)
    cs, tensors = effective.expand_cluster(ctx, order=max(order, 1))
    regime, scaling = homog.classify(tensors, khat, eps=args.epsilon)
    model = homog.DispersionModel(tensors, khat, order=order, regime=regime)
    out = {
        "ks_covariant": list(ks.components),
        "branches": branches,
        "lambda0": tensors.lambda0,
        "regime": regime.variant,
        "direction": khat.tolist(),
        "order": order,
        "rho0": tensors.rho0.tolist(),
        "theta0_diag": [np.round(tensors.theta0[q, q], 14).tolist() for q in range(ctx.Q)],
    }
    if ctx.Q == 1:
        out["omega2_poly_coefficients"] = model.poly_coefficients().tolist()
    eps_grid = [args.epsilon * t for t in (0.25, 0.5, 1.0)]
    out["omega2_samples"] = {repr(e): model.omega2(e)[0].tolist() for e in eps_grid}
    out["group_velocity"] = model.group_velocity(args.epsilon).tolist()
    text = json.dumps(_jsonable(out), indent=1)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "homogenize.json").write_text(text)
        _write_manifest(outdir, cfg, ["homogenize.json"])
    print(text)
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def cmd_classify(args):
    data = json.loads(Path(args.from_tensors).read_text())

    def vec(key):
        v = np.asarray(data[key], dtype=float) if not isinstance(data[key][0], list) \
            else np.asarray([complex(a, b) for a, b in data[key]])
        return np.asarray(v, dtype=complex)

    Q = int(data.get("Q", 2))
    if Q == 2:
        rep = dirac.classify_q2(vec("theta11"), vec("theta22"), vec("theta12"),
                                float(data["rho1"]), float(data["rho2"]),
                                float(data.get("gamma", 0.0)), d=int(data.get("d", 2)))
    elif Q == 3:
        rep = dirac.classify_q3(vec("theta12"), vec("theta13"), vec("theta23"),
                                float(data["rho1"]), float(data["rho2"]),
                                float(data["rho3"]), float(data.get("gamma", 0.0)),
                                omega_n1=data.get("omega_n1"),
                                ks_origin=bool(data.get("ks_origin", False)))
    else:
        raise ConfigError("classification expects Q = 2 or Q = 3")
    print(json.dumps(_jsonable(rep.as_dict()), indent=1))
    return 0


def cmd_respond(args):
    cfg = _load_config(args.config) if args.config else \
        {"schema_version": SCHEMA_VERSION, "geometry": {"kind": args.geometry, "h_max": args.hmax}}
    from . import cells as cell_mod
    from . import reference

    mesh = _mesh_from_config(cfg)
    mats = _materials(cfg)
    lat = mesh.lattice
    ops = assemble(mesh, mats, lat.kpoint([0.0, 0.0]))
    pairs = solve_bands(ops, int(cfg.get("branch", 2)))
    target = pairs[int(cfg.get("branch", 2)) - 1]
    ctx = cluster_context(ops, [target])
    cs, tensors = effective.expand_cluster(ctx, order=2)
    eps = args.epsilon
    src = response.build_dipole_source(mesh, epsilon=eps,
                                       M=int(cfg.get("dipole_terms", 8)))
    f_red = ops.lift(src.phi_nodal)
    cs.eta0, cs.eta0_blocks = cell_mod.solve_eta0(ctx, f_red)
    cs.zeta0 = cs.eta0[0]
    omega2 = target.lam + eps**2
    gm = response.GapModel(ctx, cs, tensors, src, omega2, kgrid=args.kgrid)

    offset = float(args.section.split("=")[1])
    L = int(cfg.get("truncation_cells", 10))
    solver = reference.ForcedReferenceSolver(mesh, mats, L, omega2)
    dom = solver.dom
    u_ref = solver.solve(src.phi_nodal[dom.base_of] * src.physical_envelope(dom.nodes))
    ids = reference.sample_line(dom, [0.0, 1.0], offset, band=0.06, span=8.0)
    pts_, bids = dom.nodes[ids], dom.base_of[ids]

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["x,y,re_u,im_u,provenance"]

    def emit(points, values, tag):
        for (x, y), v in zip(points, values):
            rows.append(f"{float(x)!r},{float(y)!r},{float(v.real)!r},{float(v.imag)!r},{tag}")

    emit(pts_, u_ref[ids], "reference")
    for p_ord in range(args.order + 1):
        snap = gm.asymptotic_field(pts_, bids, p_ord, zeta0=cs.zeta0)
        emit(pts_, snap.values, f"asymptotic({p_ord})")
        eff = gm.effective_field(pts_, p_ord)
        emit(pts_, eff.values, f"effective({p_ord})")
    (outdir / "response.csv").write_text("\n".join(rows) + "\n")
    _write_manifest(outdir, cfg, ["response.csv"])
    print(f"response: {len(ids)} sample nodes on {args.section} -> {outdir / 'response.csv'}")
    return 0


def cmd_verify(args):
    ws = acceptance.Workspace()
    only = args.only.split(",") if args.only else None
    results = acceptance.run_all(ws, only=only)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        payload = [{"name": r.name, "passed": bool(r.passed), "runtime": r.runtime,
                    "details": _jsonable(r.details)} for r in results]
        (outdir / "verify.json").write_text(json.dumps(payload, indent=1, default=str))
    if not all(r.passed for r in results):
        return 4
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="blochhom", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate or convert a unit-cell mesh")
    p.add_argument("--geometry", choices=["kagome", "pinned", "empty", "file"],
                   default="kagome")
    p.add_argument("--hmax", type=float, default=0.12)
    p.add_argument("--order", type=int, default=2, choices=[1, 2, 3])
    p.add_argument("--input", help="mesh file when --geometry file")
    p.add_argument("--out", default="out-mesh")
    p.set_defaults(fn=cmd_mesh)

    p = sub.add_parser("bands", help="band structure along a k-path")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out-bands")
    p.set_defaults(fn=cmd_bands)

    p = sub.add_parser("homogenize", help="effective model at one expansion point")
    p.add_argument("--config")
    p.add_argument("--ks", required=True, help="covariant components, e.g. '0.5,0'")
    p.add_argument("--branch", required=True, help="1-based branch list, e.g. '2' or '1,2'")
    p.add_argument("--order", type=int, default=2, choices=[0, 1, 2])
    p.add_argument("--direction", required=True, help="cartesian direction, e.g. '1,0'")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_homogenize)

    p = sub.add_parser("classify", help="cone taxonomy from a coupling-tensor file")
    p.add_argument("--from-tensors", required=True)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("respond", help="band-gap forced response on a cross-section")
    p.add_argument("--config")
    p.add_argument("--geometry", default="kagome")
    p.add_argument("--hmax", type=float, default=0.14)
    p.add_argument("--epsilon", type=float, default=0.25)
    p.add_argument("--order", type=int, default=2, choices=[0, 1, 2])
    p.add_argument("--section", default="x.j=1.5", help="cross-section, e.g. 'x.j=1.5'")
    p.add_argument("--kgrid", type=int, default=64)
    p.add_argument("--out", default="out-response")
    p.set_defaults(fn=cmd_respond)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--only", help="comma-separated criterion number filters")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except BlochhomError as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
