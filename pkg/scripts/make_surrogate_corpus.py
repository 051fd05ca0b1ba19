import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import argparse
import logging
from pathlib import Path

from models.analytics import reduction_stats
from models.filters import FilterParams
from services.dataset_loader import surrogate_corpus, write_event_file

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def make_surrogate_corpus(out_dir='data/surrogate', n_per_class=50, seed=0):
    """Write the surrogate reduction corpus as <out_dir>/<label>/<name>.csv"""

    out_dir = Path(out_dir)
    logger.info(f"🚀 Generating {n_per_class} surrogate samples per class (seed {seed})")

    samples = surrogate_corpus(n_per_class, seed=seed)
    for sample in samples:
        write_event_file(sample.stream, out_dir / sample.label / f"{sample.name}.csv")

    report = reduction_stats(samples, FilterParams(), source='surrogate')
    logger.info(f"✅ Wrote {len(samples)} samples to {out_dir}")
    logger.info(f"📊 Reduction vs raw {report.reduction_vs_raw:.3f}, vs FSAE {report.reduction_vs_fsae:.3f}")
    return out_dir


def main():
    parser = argparse.ArgumentParser(description='Write the synthetic surrogate corpus used for reduction statistics')
    parser.add_argument('out_dir', nargs='?', default='data/surrogate')
    parser.add_argument('--per-class', type=int, default=50)
    parser.add_argument('--seed', type=int, default=0)
    args = parser.parse_args()

    try:
        make_surrogate_corpus(args.out_dir, args.per_class, args.seed)
    except OSError as e:
        logger.error(f"❌ Could not write corpus: {e}")
        sys.exit(1)


if __name__ == '__main__':
    main()
