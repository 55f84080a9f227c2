"""Slice a recording into overlapping windows and reconstruct it.

Reproduces the bookkeeping used throughout training: a 22x750 recording cut
into windows of 224 with stride 75 gives 8 stacks; consecutive stacks share
149 columns, and those coincidences are what the temporal-difference loss
penalizes. Averaging the overlaps merges the stack back into a time series.
"""

import numpy as np

from diffsep import EEGRecording, destack_average, overlap_pairs, stack_windows

rng = np.random.default_rng(1)
rec = EEGRecording(subject_id=0, class_label=0,
                   data=rng.standard_normal((22, 750)).astype(np.float32),
                   sample_rate=250.0)

ws = stack_windows(rec, window=224, stride=75)
print(f"recording {rec.channels}x{rec.length} -> stack {ws.data.shape} "
      f"(channels x window x stacks)")
print(f"window starts: {[k * ws.stride for k in range(ws.stacks)]}")

om = overlap_pairs(224, 75, ws.stacks)
print(f"\noverlap map: {len(om)} coincidence records "
      f"({ws.stacks - 1} stack pairs x {224 - 75} shared columns)")
ka, ca, kb, cb = om.records()[0]
print(f"first record: stack {ka} col {ca} aliases stack {kb} col {cb} "
      f"(source index {ka * 75 + ca})")

merged = destack_average(ws)
covered = (ws.stacks - 1) * 75 + 224
print(f"\ndestacked length: {merged.shape[1]} (source index {rec.length - 1} "
      f"is never covered: the last window ends at {covered - 1})")
print(f"roundtrip max error on covered indices: "
      f"{np.abs(merged - rec.data[:, :covered]).max():.2e}")
