# -*- coding: utf-8 -*-
"""
Tests for the Flask results API
"""

from io import BytesIO

import openpyxl
import pytest

from app import app
from models.stream_config import StreamConfig
from services.database import ResultsDatabase

SMALL_RUN = {
    'synthetic_classes': '4', 'synthetic_dim': '4', 'samples_per_class': '20', 'epochs': '2',
    'finetune_epochs': '1', 'hidden_units': '8', 'feature_dim': '8', 'kmeans_restarts': '1',
}


@pytest.fixture
def client(tmp_path):
    app.config['TESTING'] = True
    app.config['RESULTS_DB'] = str(tmp_path / 'results.db')
    with app.test_client() as client:
        yield client


@pytest.fixture
def stored_run(tmp_path, client):
    db = ResultsDatabase(app.config['RESULTS_DB'])
    run_id = db.add_run(StreamConfig(), 'stored')
    db.add_stream_result(run_id, {'stream': 1, 'overall_accuracy': 0.9, 'forgetting': None,
                                  'accuracy_row': [0.9]})
    db.add_stream_result(run_id, {'stream': 2, 'overall_accuracy': 0.8, 'forgetting': 0.05,
                                  'accuracy_row': [0.85, 0.75]})
    db.finish_run(run_id, {'average_incremental_accuracy': 0.8, 'final_forgetting': 0.05,
                           'total_time': 1.0})
    return run_id


def test_empty_listing(client):
    response = client.get('/api/runs')
    assert response.status_code == 200
    assert response.get_json() == []


def test_get_run(client, stored_run):
    body = client.get(f'/api/runs/{stored_run}').get_json()
    assert body['label'] == 'stored'
    assert body['average_accuracy'] == 0.8


def test_streams(client, stored_run):
    body = client.get(f'/api/runs/{stored_run}/streams').get_json()
    assert [s['stream'] for s in body] == [1, 2]


def test_table_csv(client, stored_run):
    response = client.get(f'/api/runs/{stored_run}/table')
    assert response.mimetype == 'text/csv'
    assert response.get_data(as_text=True) == \
        "stream,accuracy,forgetting\n1,0.900000,\n2,0.800000,0.050000\n"


def test_export_xlsx(client, stored_run):
    response = client.get(f'/api/runs/{stored_run}/export')
    assert response.status_code == 200
    workbook = openpyxl.load_workbook(BytesIO(response.data))
    assert workbook['accuracy_matrix']['C3'].value == pytest.approx(0.75)


def test_unknown_run(client):
    for suffix in ('', '/streams', '/table', '/export'):
        assert client.get(f'/api/runs/999{suffix}').status_code == 404
    assert client.delete('/api/runs/999').status_code == 404
    assert client.get('/api/runs/999').get_json() == {'error': 'run 999 not found'}


def test_http_errors_are_json(client):
    response = client.put('/api/runs')
    assert response.status_code == 405
    assert 'error' in response.get_json()
    assert client.get('/api/nothing').get_json()['error']


def test_delete(client, stored_run):
    assert client.delete(f'/api/runs/{stored_run}').get_json() == {'success': True}
    assert client.get(f'/api/runs/{stored_run}').status_code == 404


def test_post_runs_synchronously(client):
    response = client.post('/api/runs', json={**SMALL_RUN, 'label': 'api'})
    assert response.status_code == 201
    body = response.get_json()
    assert body['summary']['streams'] == 2
    run = client.get(f"/api/runs/{body['id']}").get_json()
    assert run['status'] == 'finished'
    assert len(client.get(f"/api/runs/{body['id']}/streams").get_json()) == 2


def test_post_bad_config(client):
    response = client.post('/api/runs', json={'epsilon': '2.0'})
    assert response.status_code == 400
    assert 'epsilon' in response.get_json()['error']

    response = client.post('/api/runs', json={'no_such_key': '1'})
    assert response.status_code == 400
