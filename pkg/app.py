# -*- coding: utf-8 -*-
"""
Flask Application - class-incremental learning results service

JSON API over the results database; POST /api/runs runs a (small) config
synchronously and stores it.
"""

import logging
import os

from flask import Flask, Response, jsonify, request, send_file
from werkzeug.exceptions import HTTPException, NotFound

from models.stream_config import StreamConfig
from services.database import ResultsDatabase
from services.errors import CILError
from services.harness import run_stream, stream_for, summarize
from services.results import format_table, table_rows, workbook_bytes

logger = logging.getLogger(__name__)

app = Flask(__name__)
app.config['JSON_AS_ASCII'] = False
app.config['RESULTS_DB'] = os.environ.get('RESULTS_DB', 'cil_results.db')


def get_db():
    return ResultsDatabase(app.config['RESULTS_DB'])


def _require_run(db, run_id):
    run = db.get_run(run_id)
    if run is None:
        raise NotFound(f"run {run_id} not found")
    return run


# ==================== RUNS ====================

@app.route('/api/runs', methods=['GET'])
def api_get_runs():
    """API: all stored runs"""
    return jsonify(get_db().get_all_runs())


@app.route('/api/runs', methods=['POST'])
def api_create_run():
    """API: run a config synchronously and store the result"""
    data = dict(request.json or {})
    label = data.pop('label', '')
    db = get_db()
    run_id = None
    try:
        config = StreamConfig.from_dict(data)
        run_id = db.add_run(config, label)
        metrics = run_stream(config, stream_for(config),
                             on_stream=lambda record, _: db.add_stream_result(run_id, record))
        summary = summarize(metrics)
        db.finish_run(run_id, summary)
        return jsonify({'id': run_id, 'summary': summary}), 201
    except CILError as e:
        logger.error("run request failed: %s", e)
        if run_id is not None:
            db.finish_run(run_id, {}, status='failed')
        return jsonify({'error': str(e)}), 400


@app.route('/api/runs/<int:run_id>', methods=['GET'])
def api_get_run(run_id):
    """API: one run"""
    return jsonify(_require_run(get_db(), run_id))


@app.route('/api/runs/<int:run_id>', methods=['DELETE'])
def api_delete_run(run_id):
    """API: delete a run"""
    if not get_db().delete_run(run_id):
        raise NotFound(f"run {run_id} not found")
    return jsonify({'success': True})


@app.route('/api/runs/<int:run_id>/streams', methods=['GET'])
def api_get_streams(run_id):
    """API: per-stream records of a run"""
    db = get_db()
    _require_run(db, run_id)
    return jsonify(db.get_stream_results(run_id))


def _table_for(db, run_id):
    streams = db.get_stream_results(run_id)
    rows = table_rows([s['accuracy'] for s in streams], [s['forgetting'] for s in streams])
    matrix = [s['record'].get('accuracy_row', []) for s in streams]
    return rows, matrix


@app.route('/api/runs/<int:run_id>/table', methods=['GET'])
def api_get_table(run_id):
    """API: stream,accuracy,forgetting CSV"""
    db = get_db()
    _require_run(db, run_id)
    rows, _ = _table_for(db, run_id)
    return Response(format_table(rows), mimetype='text/csv')


@app.route('/api/runs/<int:run_id>/export', methods=['GET'])
def api_export_run(run_id):
    """API: Excel export of a run"""
    db = get_db()
    _require_run(db, run_id)
    rows, matrix = _table_for(db, run_id)
    return send_file(
        workbook_bytes(rows, matrix),
        mimetype='application/vnd.openxmlformats-officedocument.spreadsheetml.sheet',
        as_attachment=True,
        download_name=f'run_{run_id}.xlsx'
    )


# ==================== ERROR HANDLERS ====================

@app.errorhandler(HTTPException)
def http_error(error):
    return jsonify({'error': error.description}), error.code


@app.errorhandler(500)
def server_error(error):
    return jsonify({'error': 'server error'}), 500


if __name__ == '__main__':
    app.run(debug=True, host='127.0.0.1', port=5000)
