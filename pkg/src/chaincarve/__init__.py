"""Forensic restoration of data embedded in Ethereum transaction input fields."""

__version__ = "0.1.0"

from .codec import BytePayload, hex_decode, hex_encode, utf8_filter
from .file_carve import CarvedFile, FileCarver, carve_file, scan_payload, signature_registry, write_carved
from .ien_graph import IENGraph, build_ien, degree_stats, export_graph, import_graph
from .ingest import BlockRecord, RecordStore, TxRecord, fetch_block, fetch_range, read_records, write_records
from .report import ScanReport, category_counts, temporal_buckets, word_frequency
from .sentiment import FastTextClassifier, TrainParams, evaluate, load_model, predict, save_model, train
from .split_reassembly import ReassemblyJob, extract_chunk, find_candidates, reassemble
from .text_restore import RestorePolicy, RestoredText, TextRestorer, classify_kind, dedupe_stream, restore_text
