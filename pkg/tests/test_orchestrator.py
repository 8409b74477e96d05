import json

import numpy as np
import pytest

from clusterguard.data import generate_synthetic
from clusterguard.model import SOFTMAX_REGRESSION, ModelSpec, init_params, load_params, sgd_step, gradient, Batch
from clusterguard.orchestrator import (
    ClientState, ConfigError, ExperimentState, RoundError, _train_selected,
    client_training, config_from_dict, load_config, run_experiment, run_round,
    select_clients, setup_experiment,
)
from clusterguard.seeding import derive_rng


def base_raw(**overrides):
    raw = {
        "model": {"kind": "softmax-regression"},
        "dataset": {"kind": "synthetic", "num_classes": 4, "input_dim": 10,
                    "samples_per_class": 150, "spread": 0.3, "test_fraction": 0.2},
        "partition": {"kind": "iid"},
        "attack": "none",
        "aggregator": "fedavg",
        "num_clients": 8,
        "rounds": 5,
        "master_seed": 0,
    }
    raw.update(overrides)
    return raw


class TestConfigValidation:
    def test_minimal_config_parses(self):
        config = config_from_dict(base_raw())
        assert config.lr == 0.05  # softmax-regression default
        assert config.aggregator.name == "fedavg"

    def test_mlp_default_lr(self):
        config = config_from_dict(base_raw(model={"kind": "mlp", "hidden_dim": 8}))
        assert config.lr == 0.01

    def test_bad_selection_prob_names_field(self):
        with pytest.raises(ConfigError, match="selection_prob"):
            config_from_dict(base_raw(selection_prob=0.0))

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="mystery"):
            config_from_dict(base_raw(mystery=1))

    def test_missing_required_field(self):
        raw = base_raw()
        del raw["aggregator"]
        with pytest.raises(ConfigError, match="aggregator"):
            config_from_dict(raw)

    def test_bad_aggregator_string(self):
        with pytest.raises(ConfigError, match="aggregator"):
            config_from_dict(base_raw(aggregator="krum:-2"))

    def test_bad_attack(self):
        with pytest.raises(ConfigError, match="attack"):
            config_from_dict(base_raw(attack="label-flip:9"))

    def test_cluster_count_range(self):
        with pytest.raises(ConfigError, match="cluster_count"):
            config_from_dict(base_raw(cluster_count=50))

    def test_lr_schedule_length(self):
        with pytest.raises(ConfigError, match="schedule"):
            config_from_dict(base_raw(lr=[0.1, 0.1], rounds=5))
        config = config_from_dict(base_raw(lr=[0.1, 0.2, 0.3, 0.4, 0.5], rounds=5))
        assert config.eta(1) == 0.1
        assert config.eta(5) == 0.5

    def test_seed_override(self):
        config = config_from_dict(base_raw(master_seed=7), seed_override=99)
        assert config.master_seed == 99

    def test_load_config_roundtrip(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(base_raw()))
        config = load_config(path)
        assert config.num_clients == 8

    def test_bad_json_named(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)


class TestSelectClients:
    def test_full_participation(self):
        assert select_clients(7, 1.0, derive_rng(0, "select", 1)) == list(range(7))

    def test_binomial_moments(self):
        selected = select_clients(10_000, 0.5, derive_rng(1, "select", 1))
        assert abs(len(selected) - 5000) <= 150  # 3 sigma

    def test_empty_draw_forces_one(self):
        selected = select_clients(5, 1e-12, derive_rng(2, "select", 1))
        assert len(selected) == 1

    def test_deterministic(self):
        a = select_clients(50, 0.3, derive_rng(3, "select", 9))
        b = select_clients(50, 0.3, derive_rng(3, "select", 9))
        assert a == b


def tiny_state(num_clients=3, samples=24, seed=0):
    ds = generate_synthetic(3, 4, samples, 0.25, seed=seed)
    spec = ModelSpec(SOFTMAX_REGRESSION, 4, 3)
    params = init_params(spec, derive_rng(seed, "init"))
    clients = [ClientState(k, ds, False) for k in range(num_clients)]
    return ExperimentState(spec=spec, params=params, clients=clients, test_set=ds,
                           malicious=frozenset(), attack_seed=1)


class TestClientTraining:
    def test_zero_passes_returns_input(self):
        config = config_from_dict(base_raw(local_passes=0))
        state = tiny_state()
        out = client_training(state.params, state.clients[0], config,
                              derive_rng(0, "client", 0, 1), spec=state.spec)
        assert np.array_equal(out, state.params)

    def test_full_batch_single_pass_equals_one_sgd_step(self):
        config = config_from_dict(base_raw(local_passes=1, batch_sample_prob=1.0,
                                           batch_size=10_000, lr=0.05))
        state = tiny_state()
        client = state.clients[0]
        out = client_training(state.params, client, config,
                              derive_rng(0, "client", 0, 1), spec=state.spec)
        batch = Batch(client.dataset.features, client.dataset.labels)
        expected = sgd_step(state.params, gradient(state.spec, state.params, batch), 0.05)
        assert np.allclose(out, expected, atol=1e-15)

    def test_deterministic(self):
        config = config_from_dict(base_raw(local_passes=3, batch_sample_prob=0.6,
                                           batch_size=8))
        state = tiny_state()
        a = client_training(state.params, state.clients[1], config,
                            derive_rng(0, "client", 1, 2), spec=state.spec)
        b = client_training(state.params, state.clients[1], config,
                            derive_rng(0, "client", 1, 2), spec=state.spec)
        assert np.array_equal(a, b)


class TestRunRound:
    def test_fedavg_two_equal_clients_is_mean(self):
        raw = base_raw(num_clients=2, aggregator="fedavg", selection_prob=1.0,
                       dataset={"kind": "synthetic", "num_classes": 3, "input_dim": 6,
                                "samples_per_class": 40, "spread": 0.3,
                                "test_fraction": 0.2, "seed": 5})
        config = config_from_dict(raw)
        state = setup_experiment(config)
        assert len(state.clients[0].dataset) == len(state.clients[1].dataset)
        new_params, metrics = run_round(state, config, 1)
        manual = [client_training(state.params, state.clients[k], config,
                                  derive_rng(config.master_seed, "client", k, 1),
                                  eta=config.eta(1), spec=state.spec)
                  for k in (0, 1)]
        assert np.allclose(new_params, np.mean(manual, axis=0), atol=1e-15)
        assert metrics.selected == (0, 1)

    def test_clusterguard_identical_clients_uniform_weights(self):
        # q=1 with a batch covering the whole local set makes training
        # permutation-proof, so identical datasets give identical updates
        raw = base_raw(aggregator="clusterguard", num_clients=4, local_passes=1,
                       batch_sample_prob=1.0, batch_size=10_000)
        config = config_from_dict(raw)
        state = tiny_state(num_clients=4)
        new_params, metrics = run_round(state, config, 1)
        assert len(set(metrics.dissimilarity.values())) == 1
        assert len(set(metrics.cluster.values())) == 1  # single effective cluster
        assert all(w == pytest.approx(0.25, abs=1e-12) for w in metrics.weight.values())
        common = client_training(state.params, state.clients[0], config,
                                 derive_rng(config.master_seed, "client", 0, 1),
                                 eta=config.eta(1), spec=state.spec)
        assert np.allclose(new_params, common, atol=1e-12)

    def test_every_selected_client_gets_a_weight(self):
        config = config_from_dict(base_raw(aggregator="clusterguard",
                                           selection_prob=0.7, master_seed=3))
        state = setup_experiment(config)
        _, metrics = run_round(state, config, 1)
        assert set(metrics.weight) == set(metrics.selected)
        assert sum(metrics.weight.values()) == pytest.approx(1.0, abs=1e-9)


class TestAttackIsolation:
    @pytest.mark.parametrize("attack", ["label-flip:0.25", "gaussian-update:0.25:1.0"])
    def test_honest_updates_bit_identical_under_attack(self, attack):
        config_clean = config_from_dict(base_raw(attack="none", rounds=2))
        config_attacked = config_from_dict(base_raw(attack=attack, rounds=2))
        state_clean = setup_experiment(config_clean)
        state_attacked = setup_experiment(config_attacked)
        honest = [k for k in range(config_clean.num_clients)
                  if k not in state_attacked.malicious]
        assert state_attacked.malicious  # the attack actually selected someone
        for k in honest:
            assert np.array_equal(state_clean.clients[k].dataset.labels,
                                  state_attacked.clients[k].dataset.labels)
        selected = list(range(config_clean.num_clients))
        ups_clean = _train_selected(state_clean, config_clean, selected, 1, 0.05)
        ups_attacked = _train_selected(state_attacked, config_attacked, selected, 1, 0.05)
        for uc, ua in zip(ups_clean, ups_attacked):
            if uc.client_id in honest:
                assert np.array_equal(uc.params, ua.params)
            elif attack.startswith("gaussian"):
                assert not np.array_equal(uc.params, ua.params)


class TestRunExperiment:
    def test_single_round_equals_run_round(self):
        config = config_from_dict(base_raw(rounds=1))
        state = setup_experiment(config)
        expected, _ = run_round(state, config, 1)
        result = run_experiment(config)
        assert np.array_equal(result.final_params, expected)

    def test_round_error_names_round(self):
        config = config_from_dict(base_raw(aggregator="krum:3", num_clients=4))
        with pytest.raises(RoundError, match="round 1"):
            run_experiment(config)

    def test_diagnostics_are_observational(self):
        plain = run_experiment(config_from_dict(base_raw(rounds=3)))
        with_diag = run_experiment(config_from_dict(base_raw(rounds=3, diagnostics=True)))
        assert np.array_equal(plain.final_params, with_diag.final_params)
        assert len(with_diag.diagnostics) == 3
        assert plain.diagnostics == []

    def test_outputs_written(self, tmp_path):
        config = config_from_dict(base_raw(rounds=3, diagnostics=True,
                                           checkpoint_interval=2))
        result = run_experiment(config, out_dir=tmp_path)
        assert (tmp_path / "metrics.csv").exists()
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "diagnostics.csv").exists()
        assert (tmp_path / "checkpoint_0002.bin").exists()
        final = load_params(tmp_path / "model_final.bin")
        assert np.array_equal(final, result.final_params)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["final_test_acc"] == result.metrics[-1].test_acc
        assert summary["aggregator"] == "fedavg"

    def test_metrics_csv_structure(self, tmp_path):
        config = config_from_dict(base_raw(rounds=2, aggregator="clusterguard"))
        run_experiment(config, out_dir=tmp_path)
        lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
        assert lines[0] == ("round,client_id,selected,dissimilarity,cluster,"
                            "raw_score,weight,test_acc,test_loss,ms")
        # K client rows plus one summary row per round
        assert len(lines) == 1 + 2 * (8 + 1)
        summary_rows = [l for l in lines[1:] if l.split(",")[1] == "-1"]
        assert len(summary_rows) == 2
        assert all(row.split(",")[7] for row in summary_rows)  # test_acc present

    def test_rerun_is_byte_identical_across_threads(self, tmp_path):
        for threads, name in ((1, "a"), (1, "b"), (4, "c")):
            config = config_from_dict(base_raw(rounds=4, aggregator="clusterguard",
                                               attack="gaussian-update:0.25:1.0",
                                               threads=threads))
            run_experiment(config, out_dir=tmp_path / name)
        a = (tmp_path / "a" / "metrics.csv").read_bytes()
        b = (tmp_path / "b" / "metrics.csv").read_bytes()
        c = (tmp_path / "c" / "metrics.csv").read_bytes()
        assert a == b == c


class TestDefenseBehavior:
    def test_honest_majority_all_aggregators_near_fedavg(self):
        # run to convergence: partially trained models exaggerate rule differences
        aggregators = ["fedavg", "coord-median", "trimmed-mean", "krum", "geomed",
                       "autogm", "clustered-avg", "clusterguard"]
        for seed in range(5):
            finals = {}
            for agg in aggregators:
                config = config_from_dict(base_raw(aggregator=agg, rounds=25,
                                                   lr=0.2, master_seed=seed))
                finals[agg] = run_experiment(config).final_accuracy
            for agg, acc in finals.items():
                assert abs(acc - finals["fedavg"]) <= 0.03, \
                    f"seed {seed}: {agg} at {acc} vs fedavg {finals['fedavg']}"

    def test_malicious_weights_suppressed_under_gaussian_attack(self):
        config = config_from_dict(base_raw(aggregator="clusterguard", num_clients=10,
                                           rounds=12,
                                           attack="gaussian-update:0.2:1.0"))
        state = setup_experiment(config)
        result = run_experiment(config)
        per_round = []
        for rm in result.metrics[4:]:
            mal_weights = [rm.weight[k] for k in state.malicious if k in rm.weight]
            if mal_weights:
                per_round.append(np.mean(mal_weights))
        assert per_round
        assert np.mean(per_round) < 1.0 / 10
