# -*- coding: utf-8 -*-
"""
Database layer - SQLite store of runs and their per-stream results
"""

import json
import logging
import os
import sqlite3
import sys
from datetime import datetime

from services.results import dumps_record

logger = logging.getLogger(__name__)


def get_application_path():
    """Repository root (also when frozen into an executable)"""
    if getattr(sys, 'frozen', False):
        application_path = os.path.dirname(sys.executable)
    else:
        application_path = os.path.dirname(os.path.abspath(__file__))
        # services/ and models/ live one level below the root
        while os.path.basename(application_path) in ['services', 'models']:
            application_path = os.path.dirname(application_path)
    return application_path


def get_data_path(filename):
    """Full path of a data file; DATA_DIR relocates it (hosted disk)"""
    data_dir = os.environ.get('DATA_DIR', '')
    if data_dir and os.path.exists(data_dir):
        return os.path.join(data_dir, filename)
    return os.path.join(get_application_path(), filename)


class ResultsDatabase:
    """Runs and per-stream results"""

    def __init__(self, db_name="cil_results.db"):
        self.db_name = db_name if os.path.isabs(db_name) else get_data_path(db_name)
        self.init_database()

    def init_database(self):
        """Create the tables"""
        conn = sqlite3.connect(self.db_name)
        cursor = conn.cursor()

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                label TEXT,
                config TEXT NOT NULL,
                created_at TEXT NOT NULL,
                average_accuracy REAL,
                final_forgetting REAL,
                total_time REAL,
                status TEXT DEFAULT 'running'
            )
        ''')

        cursor.execute('''
            CREATE TABLE IF NOT EXISTS stream_results (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                stream INTEGER NOT NULL,
                accuracy REAL NOT NULL,
                forgetting REAL,
                record TEXT,
                FOREIGN KEY (run_id) REFERENCES runs (id),
                UNIQUE(run_id, stream)
            )
        ''')

        conn.commit()
        conn.close()

    def add_run(self, config, label=''):
        """New run row; returns its id"""
        conn = sqlite3.connect(self.db_name)
        cursor = conn.cursor()
        cursor.execute('INSERT INTO runs (label, config, created_at) VALUES (?, ?, ?)',
                       (label, json.dumps(config.to_dict(), sort_keys=True),
                        datetime.now().isoformat(timespec='seconds')))
        run_id = cursor.lastrowid
        conn.commit()
        conn.close()
        logger.info("run %d registered (%s)", run_id, label or 'no label')
        return run_id

    def add_stream_result(self, run_id, record):
        """Store one stream's record (from the harness callback)"""
        conn = sqlite3.connect(self.db_name)
        cursor = conn.cursor()
        cursor.execute('''
            INSERT OR REPLACE INTO stream_results (run_id, stream, accuracy, forgetting, record)
            VALUES (?, ?, ?, ?, ?)
        ''', (run_id, int(record['stream']), float(record['overall_accuracy']),
              record.get('forgetting'), dumps_record(record)))
        conn.commit()
        conn.close()

    def finish_run(self, run_id, summary, status='finished'):
        conn = sqlite3.connect(self.db_name)
        cursor = conn.cursor()
        cursor.execute('''
            UPDATE runs SET average_accuracy = ?, final_forgetting = ?, total_time = ?, status = ?
            WHERE id = ?
        ''', (summary.get('average_incremental_accuracy'), summary.get('final_forgetting'),
              summary.get('total_time'), status, run_id))
        conn.commit()
        conn.close()

    def get_all_runs(self):
        """All runs, newest first"""
        conn = sqlite3.connect(self.db_name)
        cursor = conn.cursor()
        cursor.execute('''SELECT id, label, config, created_at, average_accuracy, final_forgetting,
                          total_time, status FROM runs ORDER BY id DESC''')
        runs = [self._run_dict(row) for row in cursor.fetchall()]
        conn.close()
        return runs

    def get_run(self, run_id):
        """Run dict or None"""
        conn = sqlite3.connect(self.db_name)
        cursor = conn.cursor()
        cursor.execute('''SELECT id, label, config, created_at, average_accuracy, final_forgetting,
                          total_time, status FROM runs WHERE id = ?''', (run_id,))
        row = cursor.fetchone()
        conn.close()
        return self._run_dict(row) if row else None

    def get_stream_results(self, run_id):
        """Per-stream rows of a run in stream order"""
        conn = sqlite3.connect(self.db_name)
        cursor = conn.cursor()
        cursor.execute('''SELECT stream, accuracy, forgetting, record FROM stream_results
                          WHERE run_id = ? ORDER BY stream''', (run_id,))
        rows = cursor.fetchall()
        conn.close()
        return [{'stream': stream, 'accuracy': accuracy, 'forgetting': forgetting,
                 'record': json.loads(record) if record else {}}
                for stream, accuracy, forgetting, record in rows]

    def delete_run(self, run_id):
        """Delete a run and its stream results; False when it does not exist"""
        conn = sqlite3.connect(self.db_name)
        cursor = conn.cursor()
        cursor.execute('DELETE FROM stream_results WHERE run_id = ?', (run_id,))
        cursor.execute('DELETE FROM runs WHERE id = ?', (run_id,))
        deleted = cursor.rowcount > 0
        conn.commit()
        conn.close()
        return deleted

    @staticmethod
    def _run_dict(row):
        run_id, label, config, created_at, average, forgetting, total_time, status = row
        return {
            'id': run_id,
            'label': label,
            'config': json.loads(config),
            'created_at': created_at,
            'average_accuracy': average,
            'final_forgetting': forgetting,
            'total_time': total_time,
            'status': status,
        }
