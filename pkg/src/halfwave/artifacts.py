"""On-disk artifacts passed between pipeline stages.

A ground-state directory holds Q.hwbl and ground_state.json.  A profile-set
directory holds one .hwbl per correction field plus manifest.json.
"""

from __future__ import annotations

from pathlib import Path

from .errors import FormatError, MissingArtifactError
from .ground_state import GroundState, from_profile
from .profile import ProfileSet
from .snapshot import read_field, read_json, write_field, write_json

SCHEMA = 1
GROUND_STATE_FILE = "Q.hwbl"
GROUND_STATE_SIDECAR = "ground_state.json"
MANIFEST = "manifest.json"
RHO_FIELDS = ("rho1", "rho2_b", "rho2_beta")


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path}")
    return path


def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create {path}: {exc}") from exc
    return path


def save_ground_state(out_dir, gs: GroundState, extra: dict | None = None) -> Path:
    out = _mkdir(Path(out_dir))
    write_field(out / GROUND_STATE_FILE, gs.Q)
    write_json(out / GROUND_STATE_SIDECAR, {"schema": SCHEMA, **gs.sidecar(), **(extra or {})})
    return out


def load_ground_state(out_dir) -> GroundState:
    out = Path(out_dir)
    Q = read_field(_require(out / GROUND_STATE_FILE))
    meta = read_json(_require(out / GROUND_STATE_SIDECAR))
    return from_profile(Q, iterations=int(meta.get("iterations", 0)))


def save_profile_set(out_dir, ps: ProfileSet, extra: dict | None = None) -> Path:
    out = _mkdir(Path(out_dir))
    files = {}
    for name, f in sorted(ps.fields.items()):
        files[name] = f"{name}.hwbl"
        write_field(out / files[name], f)
    for name in RHO_FIELDS:
        files[name] = f"{name}.hwbl"
        write_field(out / files[name], getattr(ps, name))
    write_json(out / MANIFEST, {
        "schema": SCHEMA, "e1": ps.e1, "p1": ps.p1, "mu_count": ps.mu_count,
        "grid": {"n": ps.grid.n, "r_max": ps.grid.r_max},
        "fields": files, "diagnostics": ps.diagnostics, **(extra or {}),
    })
    return out


def load_profile_set(out_dir, gs: GroundState) -> ProfileSet:
    out = Path(out_dir)
    meta = read_json(_require(out / MANIFEST))
    if meta.get("schema") != SCHEMA:
        raise FormatError(f"unsupported manifest schema {meta.get('schema')}")
    fields = {}
    for name, fname in meta["fields"].items():
        f = read_field(_require(out / fname))
        if f.grid != gs.grid:
            raise FormatError(f"{fname} is on {f.grid}, ground state on {gs.grid}")
        fields[name] = f
    rho = {k: fields.pop(k) for k in RHO_FIELDS}
    return ProfileSet(gs, fields, float(meta["e1"]), float(meta["p1"]), rho["rho1"],
                      rho["rho2_b"], rho["rho2_beta"], meta.get("diagnostics", {}),
                      int(meta.get("mu_count", 24)))
