"""Batch front door: configuration, pipeline orchestration, reports, sweeps.

The pipeline is mesh -> bundles -> solve -> invariants -> higgs -> moduli.
Each run writes a JSON report (top-level keys config_echo, mesh,
bundle_dims, solution, invariants, higgs_checks, moduli) plus CSV plot
data of the pointwise curvature fields.  A failure in any stage writes a
partial report carrying a failed_at record with the stage name and the
error payload.
"""

import argparse
import csv
import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from . import bundles, germsolve, higgs, hypmesh, invariants, moduli
from .errors import EqminError, InvalidParameterError

__all__ = ["RunConfig", "run", "sweep", "main"]


@dataclass
class RunConfig:
    """All knobs of a single pipeline run.

    data_spec grammar:
      zero                                no holomorphic data
      basis:i:amp[:j:amp2]                amp * basis[i] (and for the
                                          4-space target amp2 * basis[j]
                                          as the second section)
      random:amp                          seeded random basis coefficients
      file:path[:path2]                   saved section file(s)
      manufactured:u_star                 constant-solution forcing (3-space)
    """

    genus: int = 2
    resolution: int = 3
    target: str = "rh4"
    l: int = 1
    data_spec: str = "zero"
    solver_tol: float = 1e-10
    max_iter: int = 30
    identity_scale: float = 1.0
    class_tol: float = 1e-3
    seed: int = 0
    output_dir: str = "."

    def validate(self):
        if self.genus < 2:
            raise InvalidParameterError("genus must be at least 2")
        if self.resolution < 0:
            raise InvalidParameterError("resolution must be non-negative")
        if self.target not in ("rh3", "rh4"):
            raise InvalidParameterError("target must be rh3 or rh4")
        if self.target == "rh4" and abs(self.l) >= 2 * (self.genus - 1):
            raise InvalidParameterError(
                f"degree {self.l} outside |l| < {2 * (self.genus - 1)}"
            )
        if self.solver_tol <= 0:
            raise InvalidParameterError("solver tol must be positive")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be positive")
        return self


def _mesh_info(mesh):
    return {
        "genus": mesh.genus,
        "resolution": mesh.resolution,
        "vertices": mesh.n_vertices,
        "faces": mesh.n_faces,
        "edges": mesh.n_edges,
        "euler_characteristic": mesh.euler_characteristic(),
        "total_area": mesh.total_area(),
        "target_area": float(4.0 * np.pi * (mesh.genus - 1)),
        "mesh_size": mesh.mesh_size(),
    }


def _parse_spec(spec):
    parts = str(spec).split(":")
    return parts[0], parts[1:]


def _basis_for(mesh, L, n_weight):
    """Holomorphic basis of K^2 L^{n_weight} with its expected dimension."""
    g = mesh.genus
    l = 0 if L is None else L.degree
    expected = 3 * (g - 1) + n_weight * l
    dbar = bundles.dbar_operator(mesh, L, 2, n_weight)
    basis = bundles.holomorphic_basis(dbar, expected_dim=expected)
    return basis, expected


def _prepare_data(cfg, mesh, report):
    """Build germ data from the config; returns (data, extra_report_bits)."""
    kind, args = _parse_spec(cfg.data_spec)
    if kind not in ("zero", "basis", "random", "file", "manufactured"):
        raise InvalidParameterError(f"unrecognized data spec {cfg.data_spec!r}")
    if kind == "manufactured" and cfg.target != "rh3":
        raise InvalidParameterError("manufactured data is a 3-space solver check")
    extra = {"data_spec": cfg.data_spec}
    if cfg.target == "rh3":
        if kind == "zero":
            return germsolve.GermData3(mesh), extra
        if kind == "manufactured":
            u_star = float(args[0])
            t = germsolve.manufactured_forcing(mesh, u_star)
            extra["u_star"] = u_star
            return germsolve.GermData3(mesh, t_field=t), extra
        basis, expected = _basis_for(mesh, None, 0)
        report["bundle_dims"] = {
            "K2": {"detected": len(basis), "expected": expected,
                   "gap_ratio": basis.gap_ratio},
        }
        if kind == "basis":
            i, amp = int(args[0]), float(args[1])
            q = bundles.DiscreteSection((2, 0), amp * basis[i].values,
                                        dbar_residual=amp * basis[i].dbar_residual)
            extra["amplitude"] = amp
            return germsolve.GermData3(mesh, q=q), extra
        if kind == "random":
            amp = float(args[0])
            rng = np.random.default_rng(cfg.seed)
            coef = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
            coef *= amp / np.linalg.norm(coef)
            vals = sum(c * b.values for c, b in zip(coef, basis))
            res = sum(c * b.dbar_residual for c, b in zip(coef, basis))
            q = bundles.DiscreteSection((2, 0), vals, dbar_residual=res)
            extra.update({"rng": "numpy default_rng", "seed": cfg.seed,
                          "amplitude": amp})
            return germsolve.GermData3(mesh, q=q), extra
        if kind == "file":
            q = bundles.DiscreteSection.load(args[0], mesh=mesh)
            return germsolve.GermData3(mesh, q=q), extra
        raise InvalidParameterError(f"unrecognized data spec {cfg.data_spec!r}")

    L = bundles.make_line_bundle(mesh, cfg.l)
    if kind == "zero":
        return germsolve.GermData4(mesh, L, None, None), extra
    basis2, exp2 = _basis_for(mesh, L, -1)
    report["bundle_dims"] = {
        "K2Linv": {"detected": len(basis2), "expected": exp2,
                   "gap_ratio": basis2.gap_ratio},
    }
    basis1 = None
    if kind == "random" or (kind == "basis" and len(args) >= 4):
        basis1, exp1 = _basis_for(mesh, L, 1)
        report["bundle_dims"]["K2L"] = {
            "detected": len(basis1), "expected": exp1,
            "gap_ratio": basis1.gap_ratio,
        }

    def scaled(basis, i, amp, weight):
        sec = basis[i]
        return bundles.DiscreteSection(
            (2, weight), amp * sec.values, degree_l=cfg.l,
            dbar_residual=amp * sec.dbar_residual,
        )

    if kind == "basis":
        i, amp = int(args[0]), float(args[1])
        theta2 = scaled(basis2, i, amp, -1)
        theta1 = None
        if len(args) >= 4:
            j, amp1 = int(args[2]), float(args[3])
            theta1 = scaled(basis1, j, amp1, 1)
        extra["amplitude"] = amp
        return germsolve.GermData4(mesh, L, theta1, theta2), extra
    if kind == "random":
        amp = float(args[0])
        rng = np.random.default_rng(cfg.seed)

        def draw(basis, weight):
            coef = rng.standard_normal(len(basis)) + 1j * rng.standard_normal(len(basis))
            coef *= amp / np.linalg.norm(coef)
            vals = sum(c * b.values for c, b in zip(coef, basis))
            res = sum(c * b.dbar_residual for c, b in zip(coef, basis))
            return bundles.DiscreteSection((2, weight), vals, degree_l=cfg.l,
                                           dbar_residual=res)

        theta1 = draw(basis1, 1) if len(basis1) else None
        theta2 = draw(basis2, -1) if len(basis2) else None
        extra.update({"rng": "numpy default_rng", "seed": cfg.seed,
                      "amplitude": amp})
        return germsolve.GermData4(mesh, L, theta1, theta2), extra
    if kind == "file":
        theta2 = bundles.DiscreteSection.load(args[0], mesh=mesh)
        theta1 = bundles.DiscreteSection.load(args[1], mesh=mesh) if len(args) > 1 else None
        return germsolve.GermData4(mesh, L, theta1, theta2), extra
    raise InvalidParameterError(f"unrecognized data spec {cfg.data_spec!r}")


def _class_flag(norm, class_tol):
    """Margin policy: nonzero needs 10x the tolerance, zero needs to be
    under it; the window in between is inconclusive (None)."""
    if norm >= 10.0 * class_tol:
        return True
    if norm < class_tol:
        return False
    return None


def _higgs_and_moduli(cfg, data, sol, report):
    asm = higgs.build_from_germ(data, sol)
    checks = {
        "phi_isotropy": abs(asm.phi_t_phi()),
        "structural_blocks": sorted("|".join(k) for k in asm.blocks),
    }
    lam = 2.0
    roundtrip = higgs.gauge_scale(higgs.gauge_scale(asm, lam), 1.0 / lam)
    dev = 0.0
    for key, val in asm.blocks.items():
        ref = max(float(np.max(np.abs(val))), 1e-300)
        dev = max(dev, float(np.max(np.abs(roundtrip.blocks[key] - val))) / ref)
    checks["gauge_roundtrip_rel"] = dev
    flags = {}
    mesh = data.mesh
    if asm.n == 3:
        beta = asm.blocks.get(("W", "K"))
        if beta is None:
            flags["beta"] = False
            checks["beta_harmonic_norm"] = 0.0
        else:
            d = bundles.dbar_operator(mesh, None, -1, 0)
            trivial, norm = bundles.class_is_trivial(mesh, beta, sol.u, d,
                                                     tol=cfg.class_tol)
            flags["beta"] = _class_flag(norm, cfg.class_tol)
            checks["beta_harmonic_norm"] = norm
    else:
        checks["hodge_flag"] = higgs.hodge_flag(asm)
        beta1, beta2 = asm.beta_blocks()
        norms = {}
        for name, beta, weight in (("beta1", beta1, -1), ("beta2", beta2, 1)):
            if beta is None:
                flags[name] = False
                norms[name] = 0.0
                continue
            d = bundles.dbar_operator(mesh, asm.L, -1, weight)
            trivial, norm = bundles.class_is_trivial(mesh, beta, sol.u, d,
                                                     tol=cfg.class_tol)
            flags[name] = _class_flag(norm, cfg.class_tol)
            norms[name] = norm
        checks["beta_harmonic_norms"] = norms
        if cfg.l == 0 and flags.get("beta1") and flags.get("beta2"):
            flags["proportional"] = moduli.classes_proportional(
                beta1, beta2, weights=mesh.face_area
            )
    report["higgs_checks"] = checks
    desc = moduli.classify(cfg.genus, asm.n, cfg.l if asm.n == 4 else 0,
                           class_flags=flags)
    report["moduli"] = desc.to_dict()
    return asm, desc


def _write_plot_csv(path, mesh, rep):
    u4 = np.sqrt(np.abs(rep.u4_norm_sq))
    kp = rep.kappa_perp if rep.kappa_perp is not None else np.zeros(mesh.n_vertices)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["vertex", "x", "y", "kappa_gamma", "kappa_perp", "u4_norm"])
        for i in range(mesh.n_vertices):
            wr.writerow([
                i,
                f"{mesh.vertices[i].real:.12g}",
                f"{mesh.vertices[i].imag:.12g}",
                f"{rep.kappa_gamma[i]:.12g}",
                f"{kp[i]:.12g}",
                f"{u4[i]:.12g}",
            ])


def run(cfg, write_files=True, stages=("solve", "invariants", "higgs")):
    """Execute the pipeline; returns the report dict.

    Stage failures are recorded under failed_at and the partial report is
    still written (and returned).
    """
    cfg.validate()
    if write_files:
        os.makedirs(cfg.output_dir, exist_ok=True)
    report = {"config_echo": asdict(cfg)}
    stage = "mesh"
    try:
        mesh = hypmesh.build_surface(cfg.genus, cfg.resolution)
        report["mesh"] = _mesh_info(mesh)
        stage = "bundles"
        data, extra = _prepare_data(cfg, mesh, report)
        report["config_echo"].update(extra)
        if "solve" in stages:
            stage = "germsolve"
            if cfg.target == "rh3":
                sol = germsolve.solve_gauss3(data, tol=cfg.solver_tol,
                                             max_iter=cfg.max_iter)
            else:
                sol = germsolve.solve_gauss_ricci4(data, tol=cfg.solver_tol,
                                                   max_iter=cfg.max_iter)
            report["solution"] = {
                "converged": sol.converged,
                "iterations": len(sol.newton_trace) - 1,
                "residual": sol.newton_trace[-1][1],
                "u_max": float(np.max(np.abs(sol.u))),
            }
            kind, args = _parse_spec(cfg.data_spec)
            if kind == "manufactured":
                u_star = float(args[0])
                report["solution"]["mms_error"] = float(
                    np.max(np.abs(sol.u - u_star))
                )
        if "invariants" in stages:
            stage = "invariants"
            rep = invariants.compute_invariants(data, sol)
            report["invariants"] = rep.to_dict()
            report["invariants"]["superminimal"] = invariants.superminimal_test(rep)
            if write_files:
                _write_plot_csv(
                    os.path.join(cfg.output_dir, "fields.csv"), mesh, rep
                )
        if "higgs" in stages:
            stage = "higgs"
            _higgs_and_moduli(cfg, data, sol, report)
    except EqminError as exc:
        report["failed_at"] = {
            "stage": stage,
            "error": type(exc).__name__,
            "message": str(exc),
        }
    if write_files:
        with open(os.path.join(cfg.output_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2, default=str)
    return report


_SWEEP_AXES = ("resolution", "amplitude", "l", "basis_index")


def sweep(cfg, axis, values, write_files=True):
    """One run per axis value; returns (rows, reports) and writes the
    aggregate CSV.  Individual failures are recorded per row."""
    if axis not in _SWEEP_AXES:
        raise InvalidParameterError(f"sweep axis must be one of {_SWEEP_AXES}")
    rows = []
    reports = []
    for val in values:
        c = RunConfig(**asdict(cfg))
        if axis == "resolution":
            c.resolution = int(val)
        elif axis == "l":
            c.l = int(val)
        else:
            kind, args = _parse_spec(c.data_spec)
            if kind not in ("basis", "random"):
                raise InvalidParameterError(
                    f"axis {axis} needs a basis or random data spec"
                )
            if axis == "amplitude":
                if kind == "basis":
                    args[1] = repr(float(val))
                    if len(args) >= 4:
                        args[3] = repr(float(val))
                else:
                    args[0] = repr(float(val))
            else:
                if kind != "basis":
                    raise InvalidParameterError("basis_index needs a basis spec")
                args[0] = str(int(val))
            c.data_spec = ":".join([kind] + args)
        if write_files:
            c.output_dir = os.path.join(cfg.output_dir, f"{axis}_{val}")
        rep = run(c, write_files=write_files)
        reports.append(rep)
        inv = rep.get("invariants", {})
        resid = inv.get("residuals", {})
        rows.append({
            "value": val,
            "area": inv.get("area"),
            "euler_integral": inv.get("euler_integral"),
            "max_identity_residual": max(resid.values()) if resid else None,
            "verdict": rep.get("moduli", {}).get("verdict"),
            "failed_at": rep.get("failed_at", {}).get("stage"),
        })
    if write_files:
        os.makedirs(cfg.output_dir, exist_ok=True)
        path = os.path.join(cfg.output_dir, f"sweep_{axis}.csv")
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
            wr.writeheader()
            wr.writerows(rows)
    return rows, reports


def _add_config_args(p):
    # defaults live on RunConfig; a flag given on the command line
    # overrides the config file, which overrides the dataclass default
    p.add_argument("--genus", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--target", choices=("rh3", "rh4"))
    p.add_argument("--l", type=int)
    p.add_argument("--data", dest="data_spec")
    p.add_argument("--tol", dest="solver_tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--class-tol", dest="class_tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--config", help="JSON file supplying any of the above")


def _config_from_args(args):
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
    cfg = RunConfig(**base)
    for f in ("genus", "resolution", "target", "l", "data_spec", "solver_tol",
              "max_iter", "class_tol", "seed", "output_dir"):
        v = getattr(args, f, None)
        if v is not None:
            setattr(cfg, f, v)
    return cfg


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="eqmin",
        description="equivariant minimal surfaces in hyperbolic 3- and 4-space",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("mesh-info", "basis", "solve", "invariants", "classify",
                 "verify", "sweep"):
        p = sub.add_parser(name)
        _add_config_args(p)
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=_SWEEP_AXES)
            p.add_argument("--values", required=True,
                           help="comma-separated axis values")
    args = ap.parse_args(argv)
    cfg = _config_from_args(args)

    if args.command == "mesh-info":
        mesh = hypmesh.build_surface(cfg.genus, cfg.resolution)
        print(json.dumps(_mesh_info(mesh), indent=2))
        return 0
    if args.command == "basis":
        mesh = hypmesh.build_surface(cfg.genus, cfg.resolution)
        out = {}
        if cfg.target == "rh3":
            basis, exp = _basis_for(mesh, None, 0)
            out["K2"] = {"detected": len(basis), "expected": exp,
                         "gap_ratio": basis.gap_ratio}
        else:
            L = bundles.make_line_bundle(mesh, cfg.l)
            for key, w in (("K2L", 1), ("K2Linv", -1)):
                basis, exp = _basis_for(mesh, L, w)
                out[key] = {"detected": len(basis), "expected": exp,
                            "gap_ratio": basis.gap_ratio}
        print(json.dumps(out, indent=2))
        return 0
    if args.command == "sweep":
        values = [float(v) if "." in v or "e" in v else int(v)
                  for v in args.values.split(",")]
        rows, _ = sweep(cfg, args.axis, values)
        for row in rows:
            print(json.dumps(row, default=str))
        return 0

    stages = {
        "solve": ("solve",),
        "invariants": ("solve", "invariants"),
        "classify": ("solve", "invariants", "higgs"),
        "verify": ("solve", "invariants", "higgs"),
    }[args.command]
    report = run(cfg, stages=stages)
    print(json.dumps(report, indent=2, default=str))
    if "failed_at" in report:
        return 1
    if args.command == "verify":
        ok = report.get("solution", {}).get("converged", False)
        resid = report.get("invariants", {}).get("residuals", {})
        for key in ("gauss_bonnet", "area_identity", "chi_integral"):
            ok = ok and resid.get(key, 1.0) <= 1e-6 * cfg.identity_scale
        return 0 if ok else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
