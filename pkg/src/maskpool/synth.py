"""Synthetic audio datasets for desk-scale end-to-end checks.

Generators are deterministic given the seed: the same call produces
bit-identical WAV files.  Single-label mode emits one source per clip;
multi-label mode emits a random subset of tag sources per clip, mixed
over a low noise floor.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import write_wav
from .data import TASK_MULTI, TASK_SINGLE, Manifest, load_manifest
from .errors import ShapeError
from .numerics import Rng


@dataclass
class ClassSpec:
    """One synthetic source: a pure tone at ``freq_hz`` or band-limited
    noise in ``band_hz``."""

    name: str
    kind: str  # "tone" | "noise"
    freq_hz: float = 0.0
    band_hz: tuple = (0.0, 0.0)

    @classmethod
    def parse(cls, text: str) -> "ClassSpec":
        """Parse 'tone:500' or 'noise:3000-5000' into a spec."""
        kind, _, arg = text.partition(":")
        if kind == "tone":
            return cls(name=f"tone{int(float(arg))}", kind="tone", freq_hz=float(arg))
        if kind == "noise":
            lo, _, hi = arg.partition("-")
            return cls(name=f"noise{int(float(lo))}_{int(float(hi))}", kind="noise",
                       band_hz=(float(lo), float(hi)))
        raise ShapeError(f"unknown class spec {text!r}; use tone:FREQ or noise:LO-HI")


def _render(spec: ClassSpec, n: int, fs: int, amplitude: float, rng: Rng) -> np.ndarray:
    t = np.arange(n) / fs
    if spec.kind == "tone":
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return amplitude * np.sin(2.0 * np.pi * spec.freq_hz * t + phase)
    if spec.kind == "noise":
        white = rng.normal(n, dtype=np.float64)
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, d=1.0 / fs)
        lo, hi = spec.band_hz
        spectrum[(freqs < lo) | (freqs > hi)] = 0.0
        band = np.fft.irfft(spectrum, n=n)
        rms = np.sqrt(np.mean(band * band))
        return amplitude * band / max(rms, 1e-12)
    raise ShapeError(f"unknown generator kind {spec.kind!r}")


def synth_dataset(
    out_dir,
    classes,
    task: str = TASK_SINGLE,
    n_per_class: int = 20,
    duration_s: float = 1.0,
    fs: int = 16000,
    seed: int = 0,
    num_folds: int = 4,
    noise_floor: float = 0.005,
) -> Manifest:
    """Write WAV files, a manifest, and a classes file; return the manifest.

    Single-label: ``n_per_class`` clips per class, each one source plus the
    noise floor.  Multi-label: ``n_per_class * len(classes)`` clips, each
    containing every tag independently with probability 1/2 (an empty
    subset stays at the noise floor).  Folds are assigned round-robin.
    """
    if fs not in (16000, 44100):
        raise ShapeError(f"sample rate must be 16000 or 44100, got {fs}")
    classes = [ClassSpec.parse(c) if isinstance(c, str) else c for c in classes]
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    n_samples = int(round(duration_s * fs))
    root = Rng(seed)

    rows = []
    if task == TASK_SINGLE:
        clip_no = 0
        for ci, spec in enumerate(classes):
            for j in range(n_per_class):
                rng = root.child("clip", ci, j)
                amp = rng.uniform(0.3, 0.8)
                samples = _render(spec, n_samples, fs, amp, rng.child("src"))
                samples = samples + noise_floor * rng.child("floor").normal(
                    n_samples, dtype=np.float64)
                rows.append((f"clip_{clip_no:04d}.wav", [spec.name], samples))
                clip_no += 1
    elif task == TASK_MULTI:
        total = n_per_class * len(classes)
        for j in range(total):
            rng = root.child("clip", j)
            present = [spec for k, spec in enumerate(classes)
                       if rng.child("coin", k).uniform(0.0, 1.0) < 0.5]
            samples = noise_floor * rng.child("floor").normal(n_samples, dtype=np.float64)
            for k, spec in enumerate(present):
                amp = rng.child("amp", k).uniform(0.1, 0.2)
                samples = samples + _render(spec, n_samples, fs, amp, rng.child("src", k))
            rows.append((f"clip_{j:04d}.wav", [s.name for s in present], samples))
    else:
        raise ShapeError(f"task must be '{TASK_SINGLE}' or '{TASK_MULTI}'")

    manifest_path = out_dir / "manifest.csv"
    classes_path = out_dir / "classes.txt"
    classes_path.write_text("".join(spec.name + "\n" for spec in classes))
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "labels", "fold"])
        for i, (name, labels, samples) in enumerate(rows):
            write_wav(wav_dir / name, samples, fs)
            writer.writerow([str(wav_dir / name), ";".join(labels), 1 + i % num_folds])
    return load_manifest(manifest_path, classes_path, task, num_folds)
