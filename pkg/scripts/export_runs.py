#!/usr/bin/env python3
"""
LeakSentinel Run Archive Utility

Export the archive of simulator runs as JSON or CSV, or summarize its verdicts.
"""

import sys
import os
import argparse
import json
from datetime import datetime

import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from leaksentinel.database import Database


def export_runs(output_file: str | None = None, db_path: str | None = None, fmt: str = 'json') -> str:
    """Write every archived run to a JSON document or a flat CSV table"""
    try:
        db = Database(db_path)
        json_data = db.export_to_json()
        db.close()
    except Exception as e:
        print(f"✗ Could not read archive: {str(e)}")
        sys.exit(1)

    if not output_file:
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        output_file = f"leaksentinel_runs_{timestamp}.{fmt}"

    if fmt == 'csv':
        runs = pd.DataFrame(json.loads(json_data)["runs"])
        runs.to_csv(output_file, index=False, lineterminator="\n")
    else:
        with open(output_file, 'w', encoding='utf-8') as f:
            f.write(json_data)

    print(f"✓ Runs exported to: {output_file}")
    return output_file


def show_stats(db_path: str | None = None) -> None:
    db = Database(db_path)
    stats = db.get_stats()
    db.close()

    print(f"✓ {stats['total_runs']} runs archived ({stats['failed_runs']} failed)")
    for verdict, count in sorted(stats['verdicts'].items()):
        print(f"  - {verdict}: {count}")


def main():
    parser = argparse.ArgumentParser(
        description="LeakSentinel Run Archive Utility",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python scripts/export_runs.py export
  python scripts/export_runs.py export --format csv -o runs.csv
  python scripts/export_runs.py stats --db /tmp/runs.db
        """
    )
    parser.add_argument('--db', help='Archive path (default: LEAKSENTINEL_DB)')

    subparsers = parser.add_subparsers(dest='command', help='Commands')

    export_parser = subparsers.add_parser('export', help='Export runs to a file')
    export_parser.add_argument('-o', '--output', help='Output file (default: timestamped filename)')
    export_parser.add_argument('--format', choices=['json', 'csv'], default='json')

    subparsers.add_parser('stats', help='Summarize archived verdicts')

    args = parser.parse_args()

    if args.command == 'export':
        export_runs(args.output, args.db, args.format)
    elif args.command == 'stats':
        show_stats(args.db)
    else:
        parser.print_help()
        sys.exit(1)


if __name__ == '__main__':
    main()
