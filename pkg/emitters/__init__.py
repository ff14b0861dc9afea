from .base_emitter import BaseEmitter
from .csv_emitter import CsvEmitter
from .manifest_emitter import ManifestEmitter, RunManifest
from .snapshot_emitter import SnapshotEmitter
from .svg_emitter import ChartEmitter
