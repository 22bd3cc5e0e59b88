import numpy as np
import pytest
from fastapi.testclient import TestClient

from tuple_classifier.model import EncoderArch
from tuple_classifier.service import create_app
from tuple_classifier.training import TrainingConfig, train

from separable import build_separable_corpus, split_by_article


@pytest.fixture(scope="module")
def client_and_labels():
    records = build_separable_corpus(tuples_per_campaign=60)
    train_set, val_set, _ = split_by_article(records)
    config = TrainingConfig(learning_rate=3e-4, max_epochs=20, patience=3,
                            seed=0, arch=EncoderArch(vocab_size=500))
    result = train(train_set, val_set, config)
    app = create_app(result.artifact)
    return TestClient(app), result.artifact.labels


class TestHealth:
    def test_health_contract(self, client_and_labels):
        client, _ = client_and_labels
        resp = client.get("/health")
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["status"] == "ok"
        assert isinstance(payload["model_version"], str) and payload["model_version"]


class TestPredict:
    def test_two_tuples_in_order(self, client_and_labels):
        client, labels = client_and_labels
        body = {"tuples": [
            {"article_id": "x1", "text": "campAw0 campAw1 campAw2 campAw3 campAw4"},
            {"article_id": "x2", "text": "campBw0 campBw1 campBw2 campBw3 campBw4"},
        ]}
        resp = client.post("/predict", json=body)
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["labels"] == list(labels)
        assert [p["article_id"] for p in payload["predictions"]] == ["x1", "x2"]
        assert payload["predictions"][0]["argmax"] == "campA"
        assert payload["predictions"][1]["argmax"] == "campB"

    def test_probability_vectors(self, client_and_labels):
        client, labels = client_and_labels
        body = {"tuples": [{"article_id": "a", "text": "campCw0 campCw5 campCw9"}]}
        payload = client.post("/predict", json=body).json()
        probs = payload["predictions"][0]["probs"]
        assert len(probs) == len(labels)
        assert all(p >= 0 for p in probs)
        assert abs(sum(probs) - 1.0) <= 1e-6
        argmax_label = payload["predictions"][0]["argmax"]
        assert argmax_label == labels[int(np.argmax(probs))]

    def test_identical_texts_identical_vectors(self, client_and_labels):
        client, _ = client_and_labels
        body = {"tuples": [
            {"article_id": "a", "text": "campAw0 campAw1 campAw2"},
            {"article_id": "b", "text": "campAw0 campAw1 campAw2"},
        ]}
        payload = client.post("/predict", json=body).json()
        p0 = payload["predictions"][0]["probs"]
        p1 = payload["predictions"][1]["probs"]
        assert p0 == p1

    def test_batch_composition_invariance(self, client_and_labels):
        client, _ = client_and_labels
        text = "campBw3 campBw7 campBw1 campBw2"
        alone = client.post("/predict", json={"tuples": [
            {"article_id": "a", "text": text}]}).json()
        padded_batch = client.post("/predict", json={"tuples": [
            {"article_id": "a", "text": text},
            {"article_id": "b",
             "text": "campCw0 campCw1 campCw2 campCw3 campCw4 campCw5 campCw6"},
        ]}).json()
        a = np.array(alone["predictions"][0]["probs"])
        b = np.array(padded_batch["predictions"][0]["probs"])
        assert np.abs(a - b).max() < 1e-6

    def test_empty_tuple_list_is_400(self, client_and_labels):
        client, _ = client_and_labels
        resp = client.post("/predict", json={"tuples": []})
        assert resp.status_code == 400

    def test_malformed_body_is_400(self, client_and_labels):
        client, _ = client_and_labels
        resp = client.post("/predict", json={"nonsense": True})
        assert resp.status_code == 400
        assert "error" in resp.json()
