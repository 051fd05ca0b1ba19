# services/decode_report.py

import logging
from dataclasses import dataclass, asdict
from typing import Dict

logger = logging.getLogger(__name__)


@dataclass
class DecodeReport:
    """What a decoder noticed while turning bytes into a canonical stream"""
    source_format: str
    records: int = 0
    events: int = 0
    out_of_order: int = 0
    skipped_records: int = 0
    duplicates_removed: int = 0

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def log(self, source: str = ''):
        """Surface anomalies; re-sorted timestamps are never silent"""
        where = f" in {source}" if source else ''
        if self.out_of_order:
            logger.warning(
                f"⚠️ {self.out_of_order} out-of-order timestamps{where} ({self.source_format}), re-sorted"
            )
        if self.skipped_records:
            logger.warning(f"⚠️ Skipped {self.skipped_records} non-DVS records{where}")
        if self.duplicates_removed:
            logger.warning(f"⚠️ Collapsed {self.duplicates_removed} duplicate events{where}")
        logger.debug(f"Decoded {self.events}/{self.records} records{where} ({self.source_format})")
