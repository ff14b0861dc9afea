from pathlib import Path
from typing import List, Tuple
import logging

import numpy as np
import pandas as pd

from emitters.base_emitter import BaseEmitter
from solver import Snapshot
from utils import format_speed

logger = logging.getLogger(__name__)

PGM_MAX = 65535


def encode_pgm16(field: np.ndarray) -> Tuple[bytes, float, float]:
    """
    Encode a cell field (nx, ny) as a binary 16-bit PGM.

    Rows run from the top of the domain down, columns from inlet to outlet.
    Values are scaled linearly from [min, max] to [0, 65535].

    Returns:
        Tuple of (file bytes, min, max)
    """
    image = np.asarray(field, dtype=float).T[::-1, :]
    lo, hi = float(image.min()), float(image.max())
    if hi > lo:
        levels = np.rint((image - lo) / (hi - lo) * PGM_MAX)
    else:
        levels = np.zeros_like(image)
    height, width = image.shape
    header = f"P5\n{width} {height}\n{PGM_MAX}\n".encode("ascii")
    return header + levels.astype(">u2").tobytes(), lo, hi


class SnapshotEmitter(BaseEmitter):
    def emit_snapshots(self, snapshots: List[Snapshot], design: str, speed: float,
                       fields_csv: bool = True) -> List[Path]:
        """
        Write vorticity images of one case as snapshots/{design}_{U}mps_t{time}.pgm.

        Each image gets a .txt sidecar with its value scale and, optionally, a
        .csv of the raw cell fields (x, y, u, v, p, omega).
        """
        written = []
        for snap in snapshots:
            stem = f"snapshots/{design}_{format_speed(speed)}mps_t{snap.time:.4f}"
            data, lo, hi = encode_pgm16(snap.omega)
            written.append(self.write_bytes(f"{stem}.pgm", data))
            written.append(self.write_text(
                f"{stem}.txt",
                f"quantity vorticity\nunit 1/s\nmin {lo:.9g}\nmax {hi:.9g}\nlevels {PGM_MAX}\n"
                f"time {snap.time:.9g}\n",
            ))
            if fields_csv:
                X, Y = np.meshgrid(snap.x, snap.y, indexing="ij")
                frame = pd.DataFrame({"x": X.ravel(), "y": Y.ravel(), "u": snap.u.ravel(), "v": snap.v.ravel(),
                                      "p": snap.p.ravel(), "omega": snap.omega.ravel()})
                written.append(self.write_text(
                    f"{stem}.csv", frame.to_csv(index=False, float_format="%.8g", lineterminator="\n")))
        if snapshots:
            logger.info(f"Wrote {len(snapshots)} snapshot(s) of {design} at {speed:g} m/s")
        return written
