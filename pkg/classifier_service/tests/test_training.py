import random

import pytest
import torch

from tuple_classifier.data import LabeledTuple
from tuple_classifier.model import ClassifierArtifact, EncoderArch
from tuple_classifier.training import (
    EarlyStopper,
    EmptyValidation,
    SingleClass,
    TrainingConfig,
    _run_epoch,
    train,
)

from separable import CAMPAIGNS, build_separable_corpus, split_by_article

# from-scratch training needs a larger step than the fine-tuning default
FAST = TrainingConfig(learning_rate=3e-4, max_epochs=30, patience=3, seed=0,
                      arch=EncoderArch(vocab_size=500))


@pytest.fixture(scope="module")
def separable_result(tmp_path_factory):
    records = build_separable_corpus()
    train_set, val_set, test_set = split_by_article(records)
    out_dir = tmp_path_factory.mktemp("artifact")
    result = train(train_set, val_set, FAST, out_dir)
    return result, train_set, val_set, test_set, out_dir


class TestSeparableCorpus:
    def test_validation_accuracy(self, separable_result):
        result, *_ = separable_result
        assert result.curves[result.best_epoch].val_acc >= 0.95

    def test_test_accuracy(self, separable_result):
        result, _, _, test_set, _ = separable_result
        probs = result.artifact.predict_probs([t.text for t in test_set])
        correct = sum(
            1 for t, row in zip(test_set, probs)
            if result.artifact.labels[int(row.argmax())] == t.campaign
        )
        assert correct / len(test_set) >= 0.95

    def test_best_epoch_is_argmin_val_loss(self, separable_result):
        result, *_ = separable_result
        losses = [row.val_loss for row in result.curves]
        assert result.best_epoch == losses.index(min(losses))

    def test_restored_weights_reproduce_best_val_loss(self, separable_result):
        result, _, val_set, _, _ = separable_result
        labels = torch.tensor(
            [result.encoding.index_of(t.campaign) for t in val_set])
        val_loss, _ = _run_epoch(
            result.artifact.model, result.artifact.encoder, FAST.batch_size,
            [t.text for t in val_set], labels)
        assert val_loss == pytest.approx(
            result.curves[result.best_epoch].val_loss, abs=1e-5)

    def test_curves_csv_written(self, separable_result):
        result, *_, out_dir = separable_result
        lines = (out_dir / "curves.csv").read_text().strip().split("\n")
        assert lines[0] == "epoch,train_loss,val_loss,train_acc,val_acc"
        assert len(lines) == 1 + len(result.curves)

    def test_artifact_round_trip(self, separable_result):
        result, _, _, test_set, out_dir = separable_result
        reloaded = ClassifierArtifact.load(out_dir)
        assert reloaded.labels == result.artifact.labels
        assert reloaded.model_version == result.artifact.model_version
        texts = [t.text for t in test_set[:8]]
        a = result.artifact.predict_probs(texts)
        b = reloaded.predict_probs(texts)
        assert abs(a - b).max() < 1e-6


class TestEarlyStoppingRestoration:
    def test_rising_val_loss_restores_min_checkpoint(self, tmp_path):
        # mislabel a chunk of the validation set: once the model overfits the
        # clean training data, validation loss rises and patience fires
        rng = random.Random(5)
        records = build_separable_corpus(tuples_per_campaign=60, seed=5)
        train_set, val_set, _ = split_by_article(records)
        noisy_val = [
            LabeledTuple(
                t.article_id, t.text,
                rng.choice([c for c in CAMPAIGNS if c != t.campaign])
                if rng.random() < 0.4 else t.campaign)
            for t in val_set
        ]
        config = TrainingConfig(learning_rate=1e-3, max_epochs=30, patience=3,
                                seed=0, arch=EncoderArch(vocab_size=500))
        result = train(train_set, noisy_val, config, tmp_path)
        losses = [row.val_loss for row in result.curves]
        assert result.stopped_epoch < config.max_epochs - 1, "early stop never fired"
        assert result.best_epoch == losses.index(min(losses))
        assert result.best_epoch < result.stopped_epoch
        labels = torch.tensor(
            [result.encoding.index_of(t.campaign) for t in noisy_val])
        val_loss, _ = _run_epoch(
            result.artifact.model, result.artifact.encoder, config.batch_size,
            [t.text for t in noisy_val], labels)
        assert val_loss == pytest.approx(min(losses), abs=1e-5)


class TestEarlyStopperUnit:
    def test_restores_argmin(self):
        model = torch.nn.Linear(2, 2)
        stopper = EarlyStopper(patience=2)
        losses = [1.0, 0.5, 0.7, 0.9]
        stopped_at = None
        for epoch, loss in enumerate(losses):
            with torch.no_grad():
                model.weight.fill_(float(epoch))
            if stopper.update(epoch, loss, model):
                stopped_at = epoch
                break
        assert stopped_at == 3  # two bad epochs after the minimum at epoch 1
        assert stopper.best_epoch == 1
        stopper.restore(model)
        assert model.weight[0, 0].item() == 1.0


class TestValidationErrors:
    def test_single_class_rejected(self):
        records = [t for t in build_separable_corpus(tuples_per_campaign=20)
                   if t.campaign == "campA"]
        with pytest.raises(SingleClass):
            train(records, records[:4], FAST)

    def test_empty_validation_rejected(self):
        records = build_separable_corpus(tuples_per_campaign=20)
        with pytest.raises(EmptyValidation):
            train(records, [], FAST)

    def test_unseen_validation_campaign_rejected(self):
        records = build_separable_corpus(tuples_per_campaign=20)
        train_set = [t for t in records if t.campaign != "campC"]
        val_set = [t for t in records if t.campaign == "campC"]
        with pytest.raises(SingleClass):
            train(train_set, val_set, FAST)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainingConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainingConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainingConfig(patience=0)


class TestDeterminism:
    def test_same_seed_same_bookkeeping(self):
        records = build_separable_corpus(tuples_per_campaign=40)
        train_set, val_set, _ = split_by_article(records)
        config = TrainingConfig(learning_rate=3e-4, max_epochs=6, patience=3,
                                seed=123, arch=EncoderArch(vocab_size=400))
        a = train(train_set, val_set, config)
        b = train(train_set, val_set, config)
        assert a.encoding == b.encoding
        assert len(a.curves) == len(b.curves)
        assert a.best_epoch == b.best_epoch
