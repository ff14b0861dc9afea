from pathlib import Path
import logging

from emitters.base_emitter import BaseEmitter
from solver import ForceHistory
from utils import format_speed

logger = logging.getLogger(__name__)

TABLE_FLOAT_FORMAT = "%.6g"
FORCE_FLOAT_FORMAT = "%.10g"


class CsvEmitter(BaseEmitter):
    def emit_table(self, table, name: str = "sweep_table.csv") -> Path:
        """
        Write the results table.

        Args:
            table: SweepTable to write; failed cases appear with nan values
            name: File name inside the output directory

        Returns:
            Path of the written file
        """
        frame = table.to_frame()
        text = frame.to_csv(index=False, float_format=TABLE_FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
        path = self.write_text(name, text)
        logger.info(f"Wrote {len(frame)} table rows to {path}")
        return path

    def emit_forces(self, history: ForceHistory, design: str, speed: float) -> Path:
        """Force history of one case as forces/{design}_{U}mps.csv with columns t,Fx,Fy."""
        text = history.to_frame().to_csv(index=False, float_format=FORCE_FLOAT_FORMAT, lineterminator="\n")
        return self.write_text(f"forces/{design}_{format_speed(speed)}mps.csv", text)
