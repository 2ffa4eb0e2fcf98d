"""Unit tests for the CNN-BiLSTM model"""

import numpy as np
import pytest

from errors import ConfigError, DataError, ShapeError, TrainingAbortedError
from gradient_check import numeric_gradient, random_indices, relative_error
from ids_model import build, fit, labels_from_proba, predict_labels, predict_proba
from losses import ClassWeights
from models import Head, ModelConfig, TrainConfig, Weighting
from unsw_dataset import EncodedDataset

BINARY_PAIR = ("Normal", "DoS")


def small_config(head=Head.BINARY, **kwargs):
    return ModelConfig(filters=2, kernel=3, pool=2, hidden=2, head=head, sequence_length=6, **kwargs)


def weight_arrays(model):
    return {name: array.copy() for name, array in model.network.param_arrays().items()}


def test_default_parameter_counts():
    """
    Default stack sizes for both heads
    """
    assert build(ModelConfig(), seed=0).param_count() == 6433
    assert build(ModelConfig(head=Head.MULTICLASS), seed=0).param_count() == 6730


def test_build_initialization():
    """
    Glorot ranges, zero biases and a forget-gate bias of one
    """
    network = build(ModelConfig(), seed=3)
    arrays = network.param_arrays()
    assert list(arrays) == [
        "conv.weights",
        "conv.bias",
        "bilstm.forward.input_weights",
        "bilstm.forward.recurrent_weights",
        "bilstm.forward.bias",
        "bilstm.backward.input_weights",
        "bilstm.backward.recurrent_weights",
        "bilstm.backward.bias",
        "dense.weights",
        "dense.bias",
    ]
    assert all(a.dtype == np.float32 for a in arrays.values())
    assert not arrays["conv.bias"].any() and not arrays["dense.bias"].any()

    for direction in ("forward", "backward"):
        bias = arrays[f"bilstm.{direction}.bias"]
        assert np.all(bias[1] == 1.0)
        assert not bias[[0, 2, 3]].any()

    conv_limit = np.sqrt(6.0 / (3 + 96))
    assert np.abs(arrays["conv.weights"]).max() <= conv_limit + 1e-6


def test_build_is_seeded():
    """
    Same seed gives identical weights, another seed differs
    """
    a = build(ModelConfig(), seed=1).param_arrays()
    b = build(ModelConfig(), seed=1).param_arrays()
    c = build(ModelConfig(), seed=2).param_arrays()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["conv.weights"], c["conv.weights"])


def test_build_rejects_invalid_extents():
    """
    Zero-sized layers and oversized pools are configuration errors
    """
    with pytest.raises(ConfigError):
        build(ModelConfig(filters=0), seed=0)
    with pytest.raises(ConfigError):
        build(ModelConfig(pool=50), seed=0)
    with pytest.raises(ConfigError):
        build(ModelConfig(kernel=43, padding="valid"), seed=0)


def test_probabilities_shapes():
    """
    Sigmoid column for binary, softmax rows for multiclass
    """
    x = np.random.default_rng(0).uniform(size=(7, 42, 1)).astype(np.float32)

    binary = build(ModelConfig(), seed=0).probabilities(x)
    assert binary.shape == (7, 1)
    assert np.all((binary > 0) & (binary < 1))

    multi = build(ModelConfig(head=Head.MULTICLASS), seed=0).probabilities(x)
    assert multi.shape == (7, 10)
    np.testing.assert_allclose(multi.sum(axis=1), 1.0, atol=1e-5)


def test_predictions_do_not_depend_on_batch_composition():
    """
    A row scores the same alone or inside a batch
    """
    network = build(ModelConfig(), seed=4)
    x = np.random.default_rng(1).uniform(size=(5, 42, 1)).astype(np.float32)
    together = network.probabilities(x)
    alone = np.concatenate([network.probabilities(x[i : i + 1]) for i in range(5)])
    np.testing.assert_allclose(together, alone, atol=1e-6)


@pytest.mark.parametrize("head", [Head.BINARY, Head.MULTICLASS])
def test_end_to_end_gradients(head):
    """
    Whole-stack gradients in float64 agree with central differences on sampled entries
    """
    rng = np.random.default_rng(21)
    network = build(small_config(head), seed=5).astype(np.float64)
    x = rng.uniform(size=(3, 6, 1))
    y = rng.integers(0, 2 if head == Head.BINARY else 10, size=3)
    weights = ClassWeights(rng.uniform(0.5, 2.0, size=2 if head == Head.BINARY else 10))

    _, grads = network.loss_and_grads(x, y, weights)
    for name, array in network.param_arrays().items():
        indices = random_indices(rng, array.shape, 6)
        numeric = numeric_gradient(lambda: network.loss_and_grads(x, y, weights)[0], array, indices)
        analytic = np.zeros_like(array)
        for index in indices:
            analytic[index] = grads[name][index]
        assert relative_error(analytic, numeric) < 1e-4, name


def test_end_to_end_gradients_with_dropout_mask():
    """
    A fixed dropout mask is part of the differentiated function
    """
    rng = np.random.default_rng(22)
    network = build(small_config(dropout=0.5), seed=6).astype(np.float64)
    x = rng.uniform(size=(4, 6, 1))
    y = np.array([0, 1, 1, 0])
    mask = (rng.random((4, 4)) >= 0.5) / 0.5

    _, grads = network.loss_and_grads(x, y, None, mask)
    array = network.param_arrays()["bilstm.forward.recurrent_weights"]
    numeric = numeric_gradient(lambda: network.loss_and_grads(x, y, None, mask)[0], array)
    assert relative_error(grads["bilstm.forward.recurrent_weights"], numeric) < 1e-4


def test_fit_learns_separable_records(encoded_factory):
    """
    Clearly separated classes are learned almost perfectly
    """
    data = encoded_factory(200, seed=7, categories=BINARY_PAIR)
    config = TrainConfig(epochs=15, batch_size=20, learning_rate=0.01, seed=1)
    model, history = fit(build(ModelConfig(), seed=1), data, config)

    accuracy = np.mean(predict_labels(model, data.features) == data.binary_labels)
    assert accuracy >= 0.99
    assert history.epochs == 15
    assert history.train_loss[-1] < history.train_loss[0]
    assert model.class_names == ("normal", "attack")
    assert model.metadata["seed"] == 1
    assert model.metadata["train_records"] == 200


def test_one_epoch_lowers_training_loss(encoded_factory):
    """
    A single epoch at the default learning rate reduces the full training loss for almost every seed
    """
    lowered = 0
    for seed in range(10):
        data = encoded_factory(60, seed=20 + seed)
        labels = data.labels(Head.BINARY)
        network = build(ModelConfig(), seed=seed)
        before, _ = network.loss_and_grads(data.features, labels, None)

        config = TrainConfig(epochs=1, batch_size=20, seed=seed)
        model, _ = fit(network, data, config)
        after, _ = model.network.loss_and_grads(data.features, labels, None)
        lowered += after < before
    assert lowered >= 9


def test_fit_is_reproducible(encoded_factory):
    """
    Same data, config and seed give bit-identical weights, also with sharded batches
    """
    data = encoded_factory(60, seed=8)
    config = TrainConfig(epochs=2, batch_size=16, seed=3)

    for threads in (1, 2):
        first, _ = fit(build(ModelConfig(), seed=3), data, config, threads=threads)
        second, _ = fit(build(ModelConfig(), seed=3), data, config, threads=threads)
        a, b = weight_arrays(first), weight_arrays(second)
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)


def test_fit_seed_changes_weights(encoded_factory):
    """
    Another seed gives another model
    """
    data = encoded_factory(60, seed=8)
    a, _ = fit(build(ModelConfig(), seed=1), data, TrainConfig(epochs=1, seed=1))
    b, _ = fit(build(ModelConfig(), seed=2), data, TrainConfig(epochs=1, seed=2))
    assert not np.array_equal(
        a.network.param_arrays()["dense.weights"], b.network.param_arrays()["dense.weights"]
    )


def test_balanced_inverse_frequency_matches_uniform(encoded_factory):
    """
    Equal class counts make inverse-frequency weights all ones
    """
    data = encoded_factory(40, seed=9, categories=BINARY_PAIR)
    results = []
    for weighting in (Weighting.UNIFORM, Weighting.INVERSE_FREQUENCY):
        config = TrainConfig(epochs=2, batch_size=8, seed=0, weighting=weighting)
        model, _ = fit(build(ModelConfig(), seed=0), data, config)
        results.append(weight_arrays(model))
    assert all(np.array_equal(results[0][k], results[1][k]) for k in results[0])


def test_fit_multiclass_with_validation(encoded_factory):
    """
    Multiclass training with inverse-frequency weights and a validation split
    """
    data = encoded_factory(100, seed=10)
    config = TrainConfig(
        epochs=2, batch_size=32, seed=0, weighting=Weighting.INVERSE_FREQUENCY, validation_fraction=0.2
    )
    model, history = fit(build(ModelConfig(head=Head.MULTICLASS), seed=0), data, config)

    assert len(model.metadata["class_weights"]) == 10
    assert model.metadata["train_records"] == 80
    assert all(v is not None for v in history.val_loss)
    assert all(0.0 <= a <= 1.0 for a in history.val_accuracy)
    assert model.class_names[0] == "Normal"

    proba = predict_proba(model, data.features, threads=2)
    assert proba.shape == (100, 10)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-5)


def test_fit_with_dropout_keeps_inference_deterministic(encoded_factory):
    """
    Dropout only applies during training
    """
    data = encoded_factory(40, seed=11)
    model, _ = fit(build(ModelConfig(dropout=0.3), seed=0), data, TrainConfig(epochs=1, seed=0))
    assert np.array_equal(predict_proba(model, data.features), predict_proba(model, data.features))


def test_fit_rejects_invalid_schedules(encoded_factory):
    """
    Zero epochs, zero batch size and zero threads are configuration errors
    """
    data = encoded_factory(20, seed=12)
    with pytest.raises(ConfigError):
        fit(build(ModelConfig(), seed=0), data, TrainConfig(epochs=0))
    with pytest.raises(ConfigError):
        fit(build(ModelConfig(), seed=0), data, TrainConfig(batch_size=0))
    with pytest.raises(ConfigError):
        fit(build(ModelConfig(), seed=0), data, TrainConfig(epochs=1), threads=0)


def test_fit_rejects_bad_inputs(encoded_factory):
    """
    Feature width and label range must fit the model
    """
    data = encoded_factory(20, seed=13)
    narrow = EncodedDataset(
        data.features[:, :40, :], data.binary_labels, data.multiclass_labels, "narrow"
    )
    with pytest.raises(ShapeError):
        fit(build(ModelConfig(), seed=0), narrow, TrainConfig(epochs=1))

    bad_labels = EncodedDataset(
        data.features, np.full(20, 2, dtype=np.int64), data.multiclass_labels, "bad"
    )
    with pytest.raises(DataError):
        fit(build(ModelConfig(), seed=0), bad_labels, TrainConfig(epochs=1))


def test_fit_aborts_on_non_finite_loss(encoded_factory):
    """
    NaN features make the first batch loss non-finite
    """
    data = encoded_factory(20, seed=14)
    poisoned = EncodedDataset(
        np.full_like(data.features, np.nan), data.binary_labels, data.multiclass_labels, "nan"
    )
    with pytest.raises(TrainingAbortedError) as excinfo:
        fit(build(ModelConfig(), seed=0), poisoned, TrainConfig(epochs=3))
    assert excinfo.value.epoch == 1 and excinfo.value.batch == 1
    assert excinfo.value.exit_code == 4


def test_trained_model_is_read_only(encoded_factory):
    """
    Weights of a trained model cannot be modified in place
    """
    data = encoded_factory(20, seed=15)
    model, _ = fit(build(ModelConfig(), seed=0), data, TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        model.network.param_arrays()["dense.bias"][0] = 1.0


def test_predict_rejects_wrong_feature_shape(encoded_factory):
    """
    Inference checks the input extents
    """
    data = encoded_factory(20, seed=16)
    model, _ = fit(build(ModelConfig(), seed=0), data, TrainConfig(epochs=1))
    with pytest.raises(ShapeError):
        predict_proba(model, np.zeros((2, 41, 1), dtype=np.float32))
    with pytest.raises(ConfigError):
        predict_labels(model, data.features, threshold=1.5)


def test_labels_from_proba():
    """
    Binary threshold is inclusive; multiclass ties go to the lowest index
    """
    proba = np.array([[0.2], [0.5], [0.9]])
    assert labels_from_proba(proba).tolist() == [0, 1, 1]
    assert labels_from_proba(proba, 0.0).tolist() == [1, 1, 1]
    assert labels_from_proba(proba, 1.0).tolist() == [0, 0, 0]
    with pytest.raises(ConfigError):
        labels_from_proba(proba, -0.1)

    multi = np.array([[0.4, 0.4, 0.2], [0.1, 0.3, 0.6]])
    assert labels_from_proba(multi).tolist() == [0, 2]
