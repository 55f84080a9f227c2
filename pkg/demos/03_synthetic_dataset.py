"""Generate the synthetic multi-subject dataset and look at its structure.

Each class is a fixed sinusoidal motif shared by all subjects; each subject
adds structured noise (AR(1) plus a subject-specific spectral peak) at a
chosen signal-to-noise ratio. The print-out shows that class content is
phase-locked across subjects while the noise spectra separate the subjects.
"""

import numpy as np

from diffsep import generate_synthetic_dataset, save_manifest, load_manifest

recs = generate_synthetic_dataset(n_subjects=3, n_classes=2, trials_per_cell=8,
                                  channels=4, length=128, sample_rate=128.0,
                                  snr=1.0, seed=7)
print(f"{len(recs)} trials: 3 subjects x 2 classes x 8 trials, 4x128 @ 128 Hz, snr=1\n")

print("cross-subject correlation of per-class trial averages (content is shared):")
for cls in range(2):
    means = [np.mean([r.data for r in recs if r.subject_id == s and r.class_label == cls],
                     axis=0).ravel() for s in range(3)]
    cc = [np.corrcoef(means[i], means[j])[0, 1] for i in range(3) for j in range(i + 1, 3)]
    print(f"  class {cls}: min pairwise corr {min(cc):.3f}")

print("\nper-subject noise spectra (power around each subject's peak, channel 0):")
freqs = np.fft.rfftfreq(128, 1 / 128.0)
for s in range(3):
    trials = [r.data[0] for r in recs if r.subject_id == s]
    spec = np.mean([np.abs(np.fft.rfft(x)) ** 2 for x in trials], axis=0)
    peak = freqs[np.argmax(spec[5:]) + 5]
    print(f"  subject {s}: strongest non-motif component near {peak:.0f} Hz")

import tempfile, os
with tempfile.TemporaryDirectory() as d:
    path = save_manifest(recs, d)
    back = load_manifest(path)
    same = all(a.data.tobytes() == b.data.tobytes() for a, b in zip(recs, back))
    print(f"\nmanifest round-trip at {os.path.basename(path)}: bit-exact = {same}")
