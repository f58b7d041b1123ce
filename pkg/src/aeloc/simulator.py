"""Synthetic 1-D dispersive waveguide producing two-channel sensor signal pairs.

A source excitation is propagated to two sensors in the frequency domain:
each spectral component is phase-delayed by distance / velocity(f) and
scaled by the attenuation factor.  Propagation is circular over the record;
burst sources are placed with enough headroom that nothing wraps, while
continuous sources are stationary so the wrap is part of the model.  Both
channels derive from one source realization, so cross-correlation recovers
the geometric arrival-time difference.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signals import Waveform, write_waveform_pair
from .util import atomic_write_text, fmt

DISCRETE_BURST = "discrete-burst"
CONTINUOUS_NOISE = "continuous-noise"

KM_S_TO_MM_S = 1e6


def _curve(points) -> tuple[tuple[float, float], ...]:
    pts = tuple((float(f), float(v)) for f, v in points)
    if not pts:
        raise ValueError("curve needs at least one (frequency, value) breakpoint")
    freqs = [f for f, _ in pts]
    if sorted(freqs) != freqs:
        raise ValueError("curve breakpoints must be sorted by frequency")
    return pts


@dataclass(frozen=True, eq=False)
class SpecimenModel:
    """1-D band geometry with a velocity curve, flat-or-curved attenuation, and noise level.

    ``velocity_points`` maps Hz -> km/s (linear interpolation, clamped at the
    ends); ``attenuation_db_per_m`` is a scalar or a breakpoint list of the
    same form; ``noise_snr_db=None`` disables additive noise.
    """

    length_mm: float
    sensor_1_mm: float
    sensor_2_mm: float
    velocity_points: tuple = ()
    attenuation_db_per_m: float | tuple = 0.0
    noise_snr_db: float | None = None
    sample_rate_hz: float = 1_000_000.0
    record_length: int = 16384
    reflection_coeff: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.sensor_1_mm < self.sensor_2_mm <= self.length_mm):
            raise ValueError(
                f"sensors must satisfy 0 <= sensor_1 < sensor_2 <= length, got "
                f"{self.sensor_1_mm}, {self.sensor_2_mm} on length {self.length_mm}"
            )
        object.__setattr__(self, "velocity_points", _curve(self.velocity_points))
        if any(v <= 0.0 for _, v in self.velocity_points):
            raise ValueError("velocity curve must be positive everywhere")
        att = self.attenuation_db_per_m
        if np.isscalar(att):
            if att < 0.0:
                raise ValueError("attenuation must be nonnegative")
        else:
            object.__setattr__(self, "attenuation_db_per_m", _curve(att))
            if any(a < 0.0 for _, a in self.attenuation_db_per_m):
                raise ValueError("attenuation must be nonnegative")
        if self.sample_rate_hz <= 0.0 or self.record_length < 2:
            raise ValueError("sample rate must be positive and record_length >= 2")
        if not 0.0 <= self.reflection_coeff <= 1.0:
            raise ValueError("reflection coefficient must be within [0, 1]")
        max_prop = self.sensor_separation_mm / (self.min_velocity_km_s * KM_S_TO_MM_S)
        if self.record_length / self.sample_rate_hz <= max_prop:
            raise ValueError(
                f"record of {self.record_length} samples at {self.sample_rate_hz} Hz is too "
                f"short for the maximum propagation delay {max_prop * 1e3:.3f} ms"
            )

    @property
    def sensor_separation_mm(self) -> float:
        return self.sensor_2_mm - self.sensor_1_mm

    @property
    def min_velocity_km_s(self) -> float:
        return min(v for _, v in self.velocity_points)

    def velocity_km_s(self, freq_hz) -> np.ndarray:
        fp = np.array([f for f, _ in self.velocity_points])
        vp = np.array([v for _, v in self.velocity_points])
        return np.interp(freq_hz, fp, vp)

    def attenuation_at(self, freq_hz) -> np.ndarray:
        att = self.attenuation_db_per_m
        if np.isscalar(att):
            return np.full_like(np.asarray(freq_hz, dtype=np.float64), float(att))
        fp = np.array([f for f, _ in att])
        ap = np.array([a for _, a in att])
        return np.interp(freq_hz, fp, ap)


@dataclass(frozen=True)
class SourceSpec:
    """One synthetic emission event: position, excitation kind, and reproducibility seed."""

    position_mm: float
    kind: str = DISCRETE_BURST
    amplitude: float = 1.0
    burst_center_freq_hz: float = 40_000.0
    burst_cycles: int = 10
    band_hz: tuple[float, float] = (30_000.0, 50_000.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (DISCRETE_BURST, CONTINUOUS_NOISE):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.amplitude <= 0.0:
            raise ValueError("amplitude must be positive")


def default_specimen() -> SpecimenModel:
    """Band-specimen stand-in: 23 sites at 100 mm pitch, sensors 100 mm outside the ends.

    The velocity plateau sits at 1.7 km/s over 35-45 kHz and diverges
    linearly outside it, reaching -40 % at 0 Hz and +40 % at 80 kHz with the
    same gradient on both sides.
    """
    return SpecimenModel(
        length_mm=4000.0,
        sensor_1_mm=800.0,
        sensor_2_mm=3200.0,
        velocity_points=(
            (0.0, 1.02),
            (35_000.0, 1.7),
            (45_000.0, 1.7),
            (80_000.0, 2.38),
            (500_000.0, 2.38),
        ),
        attenuation_db_per_m=5.0,
        noise_snr_db=20.0,
        sample_rate_hz=1_000_000.0,
        record_length=16384,
    )


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def synth_source(spec: SourceSpec, model: SpecimenModel) -> np.ndarray:
    """Source excitation at the emission site, one record long, deterministic per seed."""
    n = model.record_length
    fs = model.sample_rate_hz
    nyquist = fs / 2.0
    if spec.kind == DISCRETE_BURST:
        f0 = spec.burst_center_freq_hz
        if not 0.0 < f0 < nyquist:
            raise ValueError(f"burst center {f0} Hz outside (0, Nyquist={nyquist} Hz)")
        n_burst = max(3, round(spec.burst_cycles / f0 * fs))
        t = np.arange(n_burst) / fs
        burst = np.hanning(n_burst) * np.sin(2.0 * np.pi * f0 * t)
        burst *= spec.amplitude / np.max(np.abs(burst))
        start = n // 8
        if start + n_burst > n:
            raise ValueError("record too short to hold the burst")
        out = np.zeros(n)
        out[start : start + n_burst] = burst
        return out
    lo, hi = spec.band_hz
    if not 0.0 <= lo < hi < nyquist:
        raise ValueError(f"source band {spec.band_hz} Hz outside [0, Nyquist={nyquist} Hz)")
    rng = _rng(spec.seed, 0)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spectrum, n=n)
    rms = np.sqrt(np.mean(out * out))
    if rms == 0.0:
        raise ValueError("source band contains no spectral bins at this record length")
    return out * (spec.amplitude / rms)


def _channel_transfer(model: SpecimenModel, freqs: np.ndarray, distance_mm: float) -> np.ndarray:
    v_mm_s = model.velocity_km_s(freqs) * KM_S_TO_MM_S
    delay_s = distance_mm / v_mm_s
    gain = 10.0 ** (-model.attenuation_at(freqs) * (distance_mm / 1000.0) / 20.0)
    return gain * np.exp(-2j * np.pi * freqs * delay_s)


def propagate(
    excitation: np.ndarray, spec: SourceSpec, model: SpecimenModel
) -> tuple[Waveform, Waveform]:
    """Carry the excitation to both sensors; returns the noisy channel pair."""
    x = np.asarray(excitation, dtype=np.float64)
    n = model.record_length
    if x.shape != (n,):
        raise ValueError(f"excitation must have record_length={n} samples")
    if not 0.0 <= spec.position_mm <= model.length_mm:
        raise ValueError(f"source position {spec.position_mm} mm outside the specimen")
    if not model.sensor_1_mm <= spec.position_mm <= model.sensor_2_mm:
        warnings.warn(
            f"source at {spec.position_mm} mm lies outside the sensor span "
            f"[{model.sensor_1_mm}, {model.sensor_2_mm}] mm; delays saturate there",
            stacklevel=2,
        )
    fs = model.sample_rate_hz
    v_min_mm_s = model.min_velocity_km_s * KM_S_TO_MM_S
    if spec.kind == DISCRETE_BURST:
        nonzero = np.nonzero(x)[0]
        last = int(nonzero[-1]) if nonzero.size else 0
        worst_mm = max(
            abs(spec.position_mm - model.sensor_1_mm),
            abs(spec.position_mm - model.sensor_2_mm),
        )
        if last + worst_mm / v_min_mm_s * fs >= n:
            raise ValueError(
                "record too short: the delayed burst would wrap past the record end"
            )
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    spectrum = np.fft.rfft(x)
    channels = []
    for idx, sensor_mm in enumerate((model.sensor_1_mm, model.sensor_2_mm)):
        h = _channel_transfer(model, freqs, abs(spec.position_mm - sensor_mm))
        if model.reflection_coeff > 0.0:
            for end_mm in (0.0, model.length_mm):
                bounce = abs(spec.position_mm - end_mm) + abs(sensor_mm - end_mm)
                h = h + model.reflection_coeff * _channel_transfer(model, freqs, bounce)
        y = np.fft.irfft(spectrum * h, n=n)
        if model.noise_snr_db is not None:
            signal_power = float(np.mean(y * y))
            noise_std = np.sqrt(signal_power * 10.0 ** (-model.noise_snr_db / 10.0))
            y = y + _rng(spec.seed, idx + 1).standard_normal(n) * noise_std
        channels.append(Waveform(y, fs))
    return channels[0], channels[1]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a dataset generation run needs, including the master seed."""

    model: SpecimenModel
    prototype_positions_mm: tuple[float, ...]
    test_positions_mm: tuple[float, ...]
    test_source_kind: str = CONTINUOUS_NOISE
    burst_center_freq_hz: float = 40_000.0
    continuous_band_hz: tuple[float, float] = (30_000.0, 50_000.0)
    source_amplitude: float = 1.0
    seed: int = 0


def default_config() -> dict:
    """Paper-scale defaults: 12 burst prototypes at 200 mm, 23 continuous tests at 100 mm."""
    return {
        "specimen": {
            "length_mm": 4000.0,
            "sensor_1_mm": 800.0,
            "sensor_2_mm": 3200.0,
            "velocity_points_hz_km_s": [
                [0.0, 1.02],
                [35000.0, 1.7],
                [45000.0, 1.7],
                [80000.0, 2.38],
                [500000.0, 2.38],
            ],
            "attenuation_db_per_m": 5.0,
            "noise_snr_db": 20.0,
            "sample_rate_hz": 1000000.0,
            "record_length": 16384,
            "reflection_coeff": 0.0,
        },
        "prototype_positions_mm": [900.0 + 200.0 * k for k in range(12)],
        "test_positions_mm": [900.0 + 100.0 * k for k in range(23)],
        "test_source_kind": CONTINUOUS_NOISE,
        "burst_center_freq_hz": 40000.0,
        "continuous_band_hz": [30000.0, 50000.0],
        "source_amplitude": 1.0,
        "seed": 0,
    }


_SPECIMEN_KEYS = {
    "length_mm",
    "sensor_1_mm",
    "sensor_2_mm",
    "velocity_points_hz_km_s",
    "attenuation_db_per_m",
    "noise_snr_db",
    "sample_rate_hz",
    "record_length",
    "reflection_coeff",
}
_CONFIG_KEYS = {
    "specimen",
    "prototype_positions_mm",
    "test_positions_mm",
    "test_source_kind",
    "burst_center_freq_hz",
    "continuous_band_hz",
    "source_amplitude",
    "seed",
}


def parse_config(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    merged = default_config()
    spec_raw = dict(merged["specimen"])
    spec_raw.update(raw.get("specimen", {}))
    unknown = set(spec_raw) - _SPECIMEN_KEYS
    if unknown:
        raise ValueError(f"unknown specimen keys: {sorted(unknown)}")
    merged.update({k: v for k, v in raw.items() if k != "specimen"})
    att = spec_raw["attenuation_db_per_m"]
    model = SpecimenModel(
        length_mm=spec_raw["length_mm"],
        sensor_1_mm=spec_raw["sensor_1_mm"],
        sensor_2_mm=spec_raw["sensor_2_mm"],
        velocity_points=tuple(tuple(p) for p in spec_raw["velocity_points_hz_km_s"]),
        attenuation_db_per_m=att if np.isscalar(att) else tuple(tuple(p) for p in att),
        noise_snr_db=spec_raw["noise_snr_db"],
        sample_rate_hz=spec_raw["sample_rate_hz"],
        record_length=int(spec_raw["record_length"]),
        reflection_coeff=spec_raw["reflection_coeff"],
    )
    return ExperimentConfig(
        model=model,
        prototype_positions_mm=tuple(float(z) for z in merged["prototype_positions_mm"]),
        test_positions_mm=tuple(float(z) for z in merged["test_positions_mm"]),
        test_source_kind=merged["test_source_kind"],
        burst_center_freq_hz=float(merged["burst_center_freq_hz"]),
        continuous_band_hz=tuple(float(f) for f in merged["continuous_band_hz"]),
        source_amplitude=float(merged["source_amplitude"]),
        seed=int(merged["seed"]),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"configuration file not found: {path}")
    with open(path) as fh:
        return parse_config(json.load(fh))


@dataclass(frozen=True)
class ManifestRow:
    file: str
    role: str  # "prototype" | "test"
    position_mm: float
    kind: str


MANIFEST_NAME = "manifest.txt"


def write_manifest(path: str | Path, model: SpecimenModel, rows: list[ManifestRow]) -> Path:
    lines = [
        f"# sensor_1_mm={fmt(model.sensor_1_mm)} sensor_2_mm={fmt(model.sensor_2_mm)} "
        f"sample_rate_hz={fmt(model.sample_rate_hz)}",
        "file,role,position_mm,kind",
    ]
    lines.extend(f"{r.file},{r.role},{fmt(r.position_mm)},{r.kind}" for r in rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> tuple[dict, list[ManifestRow]]:
    path = Path(path)
    meta: dict = {}
    rows: list[ManifestRow] = []
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("#"):
            raise ValueError(f"{path}: manifest must start with a '# key=value ...' line")
        for token in first.lstrip("#").split():
            key, _, value = token.partition("=")
            meta[key] = float(value)
        header = fh.readline().strip()
        if header != "file,role,position_mm,kind":
            raise ValueError(f"{path}: unexpected manifest column header {header!r}")
        for ln, line in enumerate(fh, start=3):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 4:
                raise ValueError(f"{path}:{ln}: expected 4 fields")
            rows.append(ManifestRow(fields[0], fields[1], float(fields[2]), fields[3]))
    return meta, rows


def _source_seed(master_seed: int, role_index: int, source_index: int) -> int:
    seq = np.random.SeedSequence([int(master_seed), role_index, source_index])
    return int(seq.generate_state(1)[0])


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> list[ManifestRow]:
    """Synthesize prototype and test signal pairs and write them plus a manifest.

    Prototype sources are always discrete bursts (the calibration excitation);
    test sources use the configured kind.  Output bytes depend only on the
    configuration, so equal seeds give identical datasets.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = config.model
    rows: list[ManifestRow] = []
    groups = (
        ("prototype", DISCRETE_BURST, config.prototype_positions_mm),
        ("test", config.test_source_kind, config.test_positions_mm),
    )
    for role_index, (role, kind, positions) in enumerate(groups):
        for i, z in enumerate(positions):
            spec = SourceSpec(
                position_mm=float(z),
                kind=kind,
                amplitude=config.source_amplitude,
                burst_center_freq_hz=config.burst_center_freq_hz,
                band_hz=config.continuous_band_hz,
                seed=_source_seed(config.seed, role_index, i),
            )
            ch1, ch2 = propagate(synth_source(spec, model), spec, model)
            name = f"{role}_{i:02d}.txt"
            try:
                write_waveform_pair(out / name, ch1, ch2)
            except OSError as exc:
                raise OSError(f"failed writing {out / name}: {exc}") from exc
            rows.append(ManifestRow(name, role, float(z), kind))
    write_manifest(out / MANIFEST_NAME, model, rows)
    return rows
