import logging
import sys

from brbclust.harness import run_suite, write_summary_csv
from brbclust.presets import optdigits

logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s %(message)s')

# Expects data/optdigits.csv: 64 pixel columns followed by the digit label.
path = sys.argv[1] if len(sys.argv) > 1 else 'data/optdigits.csv'
required = {'DEC': 10.0, 'IDEC': 5.0, 'DCN': -1.0}

failures = []
for algorithm, threshold in required.items():
    baseline = optdigits(path, algorithm=algorithm, variant='off')
    rows = run_suite([baseline, optdigits(path, algorithm=algorithm, variant='brb')],
                     baseline=baseline.run_label, out_dir=f'runs/optdigits-{algorithm}')
    write_summary_csv(rows, f'runs/optdigits-{algorithm}/summary.csv')
    for row in rows:
        stat = row.metrics['last_acc']
        print(f'{row.label:32s} ACC {stat.mean:6.2f} +- {stat.std:5.2f}  delta {row.delta["last_acc"]:+6.2f}')
    delta = rows[1].delta['last_acc']
    if delta < threshold:
        failures.append(f'{algorithm}: delta {delta:+.2f} < {threshold:+.2f}')

print('FAILED: ' + '; '.join(failures) if failures else 'OK')
