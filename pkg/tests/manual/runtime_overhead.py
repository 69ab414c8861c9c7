import json
import logging
import sys

from brbclust.config import update_config
from brbclust.harness import ExperimentRunner, timing_report
from brbclust.presets import optdigits

logging.basicConfig(level=logging.INFO)

path = sys.argv[1] if len(sys.argv) > 1 else 'data/optdigits.csv'
config = update_config(optdigits(path, algorithm='DEC', variant='brb', seeds=(0,)),
                       {'brb.recluster.subsample': 1000, 'brb.interval': 20})
report = timing_report(ExperimentRunner(config, 0).run())
print(json.dumps(report.model_dump(exclude={'events'}), indent=2))
print('OK' if report.brb_share <= 0.05 else 'FAILED')
