import json
from dataclasses import replace

import pytest

from marlsgs.cli import main
from marlsgs.config import RunConfig, TEST_CASES, case_config, desk_config, scale_config
from marlsgs.solver import PhysicsParams, read_archive
from marlsgs.trainer import PPOConfig, TrainerConfig


def tiny_config() -> RunConfig:
    return RunConfig(
        physics=PhysicsParams(re=300.0, beta=0.0, drag=0.1, kappa_f=4),
        n_dns=32,
        n_les=16,
        dt_dns=0.005,
        spinup_time=0.05,
        sample_interval=0.05,
        n_target_snapshots=2,
        n_init_snapshots=2,
        training_horizon=8,
        update_every=2,
        agents_per_side=4,
        eval_horizon=3,
        eval_burn_in=0,
        trainer=TrainerConfig(n_envs=2, n_updates=2, rollout_length=2, hidden=(8, 8), checkpoint_every=1,
                              ppo=PPOConfig(minibatch=16)),
    )


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "config.json"
    tiny_config().save(path)
    return path


def run_all(cfg_file, out):
    for cmd in ("dns", "target", "train", "evaluate"):
        assert main([cmd, "--config", str(cfg_file), "--out", str(out)]) == 0, cmd


class TestConfig:
    def test_round_trip(self):
        cfg = replace(desk_config(2), seed=9)
        assert RunConfig.loads(cfg.dumps()) == cfg
        assert RunConfig.loads(tiny_config().dumps()) == tiny_config()

    @pytest.mark.parametrize("case", [1, 2, 3])
    def test_table_defaults(self, case):
        cfg = case_config(case)
        row = TEST_CASES[case]
        assert cfg.physics.re == 20000 and cfg.physics.drag == 0.1
        assert cfg.physics.beta == row["beta"] and cfg.physics.kappa_f == row["kappa_f"]
        assert cfg.dt_ratio == 10 and cfg.n_dns == 1024
        assert cfg.training_horizon == {1: 10000, 2: 20000, 3: 10000}[case]
        assert cfg.update_every == {1: 10, 2: 20, 3: 10}[case]
        assert cfg.n_les == {1: 32, 2: 32, 3: 256}[case]
        assert cfg.env_config().steps_per_action == cfg.update_every

    def test_unknown_key(self):
        d = tiny_config().to_dict()
        d["bogus"] = 1
        with pytest.raises(ValueError):
            RunConfig.from_dict(d)

    def test_scale(self):
        cfg = scale_config(case_config(1), 2)
        assert (cfg.n_dns, cfg.n_les) == (512, 16)
        assert cfg.physics.re == 10000 and cfg.dt_dns == pytest.approx(4e-4)
        assert cfg.training_horizon == 5000
        assert scale_config(cfg, 1) is cfg
        with pytest.raises(ValueError):
            scale_config(case_config(1), 0)

    def test_unresolved_forcing_rejected(self):
        with pytest.raises(ValueError):
            scale_config(case_config(3), 4)
        with pytest.raises(ValueError):
            scale_config(case_config(1), 4)

    def test_desk_setup(self):
        cfg = desk_config()
        assert (cfg.n_dns, cfg.n_les, cfg.physics.re) == (128, 32, 2000)
        assert cfg.horizon_intervals == 500 and cfg.trainer.n_envs == 4 and cfg.trainer.n_updates <= 200


class TestCli:
    def test_missing_out(self, cfg_file, capsys):
        assert main(["dns", "--config", str(cfg_file)]) == 1
        assert "--out" in capsys.readouterr().err

    def test_bad_subcommand(self):
        assert main(["fly"]) == 1

    def test_missing_checkpoint(self, cfg_file, tmp_path):
        assert main(["evaluate", "--config", str(cfg_file), "--out", str(tmp_path / "o"),
                     "--checkpoint", str(tmp_path / "nope.bin")]) == 3

    def test_train_without_target(self, cfg_file, tmp_path):
        assert main(["train", "--config", str(cfg_file), "--out", str(tmp_path / "o")]) == 3

    def test_corrupt_archive(self, cfg_file, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"junk")
        assert main(["target", "--config", str(cfg_file), "--out", str(tmp_path), "--archive", str(bad)]) == 1

    def test_config_materialized(self, tmp_path):
        path = tmp_path / "new.json"
        out = tmp_path / "o"
        main(["target", "--config", str(path), "--out", str(out), "--scale", "desk"])
        assert RunConfig.load(path) == desk_config()

    def test_pipeline(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "run"
        run_all(cfg_file, out)
        arc = read_archive(out / "dns_archive.bin")
        assert len(arc) == 4
        assert len(read_archive(out / "dns_target.bin")) == 2
        rows = [ln for ln in (out / "target.csv").read_text().splitlines() if ln[:1].isdigit()]
        assert len(rows) == 16 // 3
        summary = json.loads((out / "eval" / "summary.json").read_text())
        assert set(summary["closures"]) == {"marl", "dynamic_smagorinsky", "dynamic_leith", "none", "filtered_dns"}
        assert summary["coarsening_factor"] == (32 / 16) ** 2 * 10
        for name in summary["closures"]:
            for kind in ("enstrophy_spectrum", "energy_spectrum", "vorticity_pdf"):
                assert (out / "eval" / f"{name}_{kind}.csv").exists()
        capsys.readouterr()
        assert main(["compare", str(out / "eval" / "summary.json")]) == 0
        assert "dynamic_leith" in capsys.readouterr().out

    def test_idempotent(self, cfg_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_all(cfg_file, a)
        run_all(cfg_file, b)
        for name in ("dns_archive.bin", "dns_target.bin", "dns_init.bin", "target.csv",
                     "train/checkpoint_final.bin", "train/episodes.jsonl", "eval/summary.json",
                     "eval/marl_vorticity_pdf.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        strip = lambda p: [{k: v for k, v in json.loads(ln).items() if k != "wall_time"}
                           for ln in p.read_text().splitlines()]
        assert strip(a / "train" / "train_log.jsonl") == strip(b / "train" / "train_log.jsonl")

    def test_seed_override(self, cfg_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["dns", "--config", str(cfg_file), "--out", str(a)])
        main(["dns", "--config", str(cfg_file), "--out", str(b), "--seed", "5"])
        assert (a / "dns_archive.bin").read_bytes() != (b / "dns_archive.bin").read_bytes()

    def test_blowup_exit_code(self, tmp_path):
        cfg = replace(tiny_config(), dt_dns=1.0)
        path = tmp_path / "hot.json"
        cfg.save(path)
        assert main(["dns", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
