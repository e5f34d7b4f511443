"""Scene geometry, UPA steering vectors and path-parameter derivation.

Array frame: elements along the x axis (``mx``) and z axis (``mz``), the
array faces +y.  Azimuth is measured in the x-y (horizontal) plane from +x,
zenith from +z.  A unit arrival direction is therefore
``(sin(zen) cos(az), sin(zen) sin(az), cos(zen))``.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class SceneError(ValueError):
    """Invalid scene description or degenerate geometry."""


class AngleDomainError(ValueError):
    """Angle outside the [0, 180] degree scan range."""


class PathKind(str, enum.Enum):
    CLUTTER = "clutter"
    TARGET = "target"


@dataclass(frozen=True)
class ArrayGeometry:
    mx: int
    mz: int
    spacing_over_lambda: float = 0.5
    carrier_hz: float = 28e9

    def __post_init__(self):
        if int(self.mx) != self.mx or int(self.mz) != self.mz or self.mx < 1 or self.mz < 1:
            raise SceneError(f"array dimensions must be positive integers, got {self.mx}x{self.mz}")
        if not self.spacing_over_lambda > 0:
            raise SceneError("spacing_over_lambda must be positive")
        if not self.carrier_hz > 0:
            raise SceneError("carrier_hz must be positive")

    @property
    def n_elements(self) -> int:
        return self.mx * self.mz

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz


@dataclass(frozen=True)
class PathParams:
    gain: complex
    delay_s: float
    doppler_hz: float
    azimuth_deg: float
    zenith_deg: float
    kind: PathKind
    label: str = ""

    def __post_init__(self):
        if self.delay_s < 0:
            raise SceneError(f"negative delay for path {self.label!r}")
        _check_angles(self.azimuth_deg, self.zenith_deg)

    @property
    def doa(self) -> tuple[float, float]:
        return (self.azimuth_deg, self.zenith_deg)


@dataclass(frozen=True)
class Scatterer:
    position_m: tuple[float, float, float]
    reflectivity: complex = 1.0
    velocity_mps: tuple[float, float, float] = (0.0, 0.0, 0.0)
    doppler_hz: float | None = None  # overrides the kinematic Doppler
    label: str = ""


@dataclass(frozen=True)
class Target:
    position_m: tuple[float, float, float]
    reflectivity: complex = 1.0
    bistatic_radial_velocity_mps: float = 0.0
    label: str = ""


@dataclass(frozen=True)
class Scene:
    """Immutable scene.

    When ``paths`` is given, it is used verbatim by :func:`derive_paths`
    and the geometric ``clutter``/``targets`` records are informational
    (e.g. ground-truth positions for localization).
    """

    bs_position_m: tuple[float, float, float]
    ue_position_m: tuple[float, float, float]
    array: ArrayGeometry
    clutter: tuple[Scatterer, ...] = ()
    targets: tuple[Target, ...] = ()
    paths: tuple[PathParams, ...] | None = None
    bs_yaw_deg: float = 0.0
    spreading_loss: bool = True
    snr_db: float | None = None
    name: str = ""

    def __post_init__(self):
        for label, p in (("bs_position_m", self.bs_position_m), ("ue_position_m", self.ue_position_m)):
            if len(p) != 3 or not all(math.isfinite(v) for v in p):
                raise SceneError(f"{label} must be a finite 3-vector")
        for s in (*self.clutter, *self.targets):
            if len(s.position_m) != 3 or not all(math.isfinite(v) for v in s.position_m):
                raise SceneError(f"non-finite scatterer position {s.position_m}")
        if np.allclose(self.bs_position_m, self.ue_position_m, atol=0.0, rtol=0.0):
            raise SceneError("BS and UE positions coincide")

    def with_ue(self, ue_position_m: Sequence[float]) -> "Scene":
        return replace(self, ue_position_m=tuple(float(v) for v in ue_position_m))

    def with_array(self, array: ArrayGeometry) -> "Scene":
        return replace(self, array=array)

    def with_paths(self, paths: Sequence[PathParams]) -> "Scene":
        return replace(self, paths=tuple(paths))

    def digest(self) -> str:
        """Stable short hash of the scene content."""
        blob = json.dumps(scene_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _check_angles(azimuth_deg, zenith_deg):
    az = np.asarray(azimuth_deg, dtype=float)
    zen = np.asarray(zenith_deg, dtype=float)
    if np.any(~np.isfinite(az)) or np.any(~np.isfinite(zen)):
        raise AngleDomainError("non-finite angle")
    if np.any((az < 0) | (az > 180)) or np.any((zen < 0) | (zen > 180)):
        raise AngleDomainError(
            f"angles must lie in [0, 180] degrees, got azimuth={azimuth_deg}, zenith={zenith_deg}"
        )


def steering_vector(geom: ArrayGeometry, azimuth_deg: float, zenith_deg: float) -> np.ndarray:
    """Array response ``alpha_x(az, zen) kron alpha_z(zen)`` of length ``mx*mz``."""
    _check_angles(azimuth_deg, zenith_deg)
    az = math.radians(azimuth_deg)
    zen = math.radians(zenith_deg)
    k = 2 * math.pi * geom.spacing_over_lambda
    ax = np.exp(1j * k * np.arange(geom.mx) * math.cos(az) * math.sin(zen))
    az_ = np.exp(1j * k * np.arange(geom.mz) * math.cos(zen))
    return np.kron(ax, az_)


def steering_matrix(geom: ArrayGeometry, doas: Sequence[tuple[float, float]]) -> np.ndarray:
    """Columns are steering vectors of ``doas``; shape ``(M, len(doas))``."""
    if len(doas) == 0:
        return np.zeros((geom.n_elements, 0), dtype=complex)
    doas = np.asarray(doas, dtype=float).reshape(-1, 2)
    _check_angles(doas[:, 0], doas[:, 1])
    az = np.radians(doas[:, 0])
    zen = np.radians(doas[:, 1])
    k = 2 * np.pi * geom.spacing_over_lambda
    ux = np.cos(az) * np.sin(zen)
    uz = np.cos(zen)
    ax = np.exp(1j * k * np.arange(geom.mx)[:, None] * ux[None, :])
    azv = np.exp(1j * k * np.arange(geom.mz)[:, None] * uz[None, :])
    return (ax[:, None, :] * azv[None, :, :]).reshape(geom.n_elements, -1)


# Radio-engineering rounding of c used for velocity -> Doppler conversion;
# it reproduces the tabulated reference Dopplers (40 m/s at 28 GHz ->
# 3733.3 Hz).  Propagation delays use the exact SPEED_OF_LIGHT.
DOPPLER_C = 3.0e8


def doppler_from_velocity(bistatic_radial_velocity_mps: float, carrier_hz: float,
                          speed_of_light: float = DOPPLER_C) -> float:
    """``f_D = v f_c / c``.  ``c`` defaults to :data:`DOPPLER_C`."""
    if not carrier_hz > 0:
        raise SceneError("carrier_hz must be positive")
    return bistatic_radial_velocity_mps * carrier_hz / speed_of_light


def bistatic_delay(ue_m, point_m, bs_m) -> float:
    ue, x, bs = (np.asarray(v, dtype=float) for v in (ue_m, point_m, bs_m))
    return float((np.linalg.norm(x - ue) + np.linalg.norm(x - bs)) / SPEED_OF_LIGHT)


def arrival_doa(bs_m, point_m, bs_yaw_deg: float = 0.0) -> tuple[float, float]:
    """BS-frame (azimuth, zenith) in degrees of a point seen from the BS."""
    d = np.asarray(point_m, dtype=float) - np.asarray(bs_m, dtype=float)
    r = np.linalg.norm(d)
    if r == 0:
        raise SceneError("scatterer coincides with the BS")
    yaw = math.radians(bs_yaw_deg)
    x = math.cos(yaw) * d[0] + math.sin(yaw) * d[1]
    y = -math.sin(yaw) * d[0] + math.cos(yaw) * d[1]
    zen = math.degrees(math.acos(max(-1.0, min(1.0, d[2] / r))))
    az = math.degrees(math.atan2(y, x))
    if az < 0:
        # behind the array plane; clamp to the visible half-space would hide errors
        raise SceneError(
            f"point {tuple(point_m)} lies behind the array (azimuth {az:.2f} deg); adjust bs_yaw_deg"
        )
    return az, zen


def _scatterer_gain(scene: Scene, position) -> complex:
    beta = complex(getattr(position, "reflectivity", 1.0))
    if scene.spreading_loss:
        p = np.asarray(position.position_m, dtype=float)
        d1 = np.linalg.norm(p - np.asarray(scene.ue_position_m))
        d2 = np.linalg.norm(p - np.asarray(scene.bs_position_m))
        if d1 == 0 or d2 == 0:
            raise SceneError("scatterer coincides with a terminal")
        beta = beta / (d1 * d2)
    return beta


def derive_paths(scene: Scene) -> list[PathParams]:
    """Path list of the scene: clutter paths first, then targets."""
    if scene.paths is not None:
        return list(scene.paths)
    ue = np.asarray(scene.ue_position_m, dtype=float)
    bs = np.asarray(scene.bs_position_m, dtype=float)
    out = []
    for i, c in enumerate(scene.clutter):
        p = np.asarray(c.position_m, dtype=float)
        az, zen = arrival_doa(bs, p, scene.bs_yaw_deg)
        if c.doppler_hz is not None:
            fd = float(c.doppler_hz)
        else:
            v = np.asarray(c.velocity_mps, dtype=float)
            u1 = (p - ue) / np.linalg.norm(p - ue)
            u2 = (p - bs) / np.linalg.norm(p - bs)
            # rate of change of the bistatic path length, negated
            fd = doppler_from_velocity(float(-v @ (u1 + u2)), scene.array.carrier_hz) + 0.0
        out.append(PathParams(
            gain=_scatterer_gain(scene, c),
            delay_s=bistatic_delay(ue, p, bs),
            doppler_hz=fd,
            azimuth_deg=az,
            zenith_deg=zen,
            kind=PathKind.CLUTTER,
            label=c.label or f"clutter{i + 1}",
        ))
    for i, t in enumerate(scene.targets):
        p = np.asarray(t.position_m, dtype=float)
        az, zen = arrival_doa(bs, p, scene.bs_yaw_deg)
        out.append(PathParams(
            gain=_scatterer_gain(scene, t),
            delay_s=bistatic_delay(ue, p, bs),
            doppler_hz=doppler_from_velocity(t.bistatic_radial_velocity_mps, scene.array.carrier_hz),
            azimuth_deg=az,
            zenith_deg=zen,
            kind=PathKind.TARGET,
            label=t.label or f"target{i + 1}",
        ))
    return out


def clutter_paths(paths: Sequence[PathParams]) -> list[PathParams]:
    return [p for p in paths if p.kind is PathKind.CLUTTER]


def target_paths(paths: Sequence[PathParams]) -> list[PathParams]:
    return [p for p in paths if p.kind is PathKind.TARGET]


# --------------------------------------------------------------------------
# JSON configuration
# --------------------------------------------------------------------------

def _complex_from_json(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict):
        if "mag" in v:
            return complex(v["mag"] * np.exp(1j * math.radians(v.get("phase_deg", 0.0))))
        return complex(v.get("re", 0.0), v.get("im", 0.0))
    return complex(float(v))


def _complex_to_json(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _vec3(v, what) -> tuple[float, float, float]:
    v = [float(x) for x in v]
    if len(v) == 2:
        v.append(0.0)
    if len(v) != 3:
        raise SceneError(f"{what} must have 2 or 3 components")
    return tuple(v)


def scene_from_dict(d: dict) -> Scene:
    try:
        arr = d["array"]
        array = ArrayGeometry(
            mx=int(arr["mx"]),
            mz=int(arr["mz"]),
            spacing_over_lambda=float(arr.get("spacing_over_lambda", 0.5)),
            carrier_hz=float(arr.get("carrier_hz", 28e9)),
        )
        clutter = tuple(
            Scatterer(
                position_m=_vec3(c["position_m"], "clutter position"),
                reflectivity=_complex_from_json(c.get("reflectivity", 1.0)),
                velocity_mps=_vec3(c.get("velocity_mps", [0, 0, 0]), "clutter velocity"),
                doppler_hz=None if c.get("doppler_hz") is None else float(c["doppler_hz"]),
                label=c.get("label", ""),
            )
            for c in d.get("clutter", [])
        )
        targets = tuple(
            Target(
                position_m=_vec3(t["position_m"], "target position"),
                reflectivity=_complex_from_json(t.get("reflectivity", 1.0)),
                bistatic_radial_velocity_mps=float(t.get("bistatic_radial_velocity_mps", 0.0)),
                label=t.get("label", ""),
            )
            for t in d.get("targets", [])
        )
        paths = None
        if d.get("paths") is not None:
            paths = tuple(
                PathParams(
                    gain=_complex_from_json(p.get("gain", 1.0)),
                    delay_s=float(p["delay_us"]) * 1e-6,
                    doppler_hz=float(p["doppler_hz"]),
                    azimuth_deg=float(p["azimuth_deg"]),
                    zenith_deg=float(p["zenith_deg"]),
                    kind=PathKind(p["kind"].lower()),
                    label=p.get("label", ""),
                )
                for p in d["paths"]
            )
        return Scene(
            bs_position_m=_vec3(d["bs_position_m"], "bs_position_m"),
            ue_position_m=_vec3(d["ue_position_m"], "ue_position_m"),
            array=array,
            clutter=clutter,
            targets=targets,
            paths=paths,
            bs_yaw_deg=float(d.get("bs_yaw_deg", 0.0)),
            spreading_loss=bool(d.get("spreading_loss", True)),
            snr_db=None if d.get("snr_db") is None else float(d["snr_db"]),
            name=d.get("name", ""),
        )
    except KeyError as exc:
        raise SceneError(f"missing scene field {exc}") from None


def scene_to_dict(scene: Scene) -> dict:
    d = {
        "name": scene.name,
        "bs_position_m": list(scene.bs_position_m),
        "ue_position_m": list(scene.ue_position_m),
        "bs_yaw_deg": scene.bs_yaw_deg,
        "spreading_loss": scene.spreading_loss,
        "snr_db": scene.snr_db,
        "array": {
            "mx": scene.array.mx,
            "mz": scene.array.mz,
            "spacing_over_lambda": scene.array.spacing_over_lambda,
            "carrier_hz": scene.array.carrier_hz,
        },
        "clutter": [
            {
                "label": c.label,
                "position_m": list(c.position_m),
                "reflectivity": _complex_to_json(c.reflectivity),
                "velocity_mps": list(c.velocity_mps),
                "doppler_hz": c.doppler_hz,
            }
            for c in scene.clutter
        ],
        "targets": [
            {
                "label": t.label,
                "position_m": list(t.position_m),
                "reflectivity": _complex_to_json(t.reflectivity),
                "bistatic_radial_velocity_mps": t.bistatic_radial_velocity_mps,
            }
            for t in scene.targets
        ],
    }
    if scene.paths is not None:
        d["paths"] = [
            {
                "label": p.label,
                "kind": p.kind.value,
                "delay_us": round(p.delay_s * 1e6, 9),
                "doppler_hz": p.doppler_hz,
                "azimuth_deg": p.azimuth_deg,
                "zenith_deg": p.zenith_deg,
                "gain": _complex_to_json(p.gain),
            }
            for p in scene.paths
        ]
    return d


def load_scene(path: str | Path) -> Scene:
    """Load a scene JSON file.  ``bundled:<name>`` loads a packaged scene."""
    path = str(path)
    if path.startswith("bundled:"):
        return load_bundled_scene(path.split(":", 1)[1])
    with open(path) as fh:
        return scene_from_dict(json.load(fh))


def save_scene(scene: Scene, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)
        fh.write("\n")


def bundled_path(name: str) -> Path:
    p = Path(__file__).parent / "data" / (name if name.endswith(".json") else name + ".json")
    if not p.exists():
        raise SceneError(f"no bundled file {name!r}")
    return p


def load_bundled_scene(name: str) -> Scene:
    with open(bundled_path(name)) as fh:
        return scene_from_dict(json.load(fh))
