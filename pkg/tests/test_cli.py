"""
Tests for run configuration, the experiment manager and the command-line
pipeline on the toy segmenter.
"""

import csv
import json

import pytest
from pydantic import ValidationError

from cl_uap.cli.commands import COMMAND_HANDLERS, EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL, EXIT_TOOLKIT_ERROR
from cl_uap.cli.main import build_parser, main, overrides_from_args, run
from cl_uap.cli.models import RunConfig, load_run_config, merge_overrides
from cl_uap.core.errors import ConfigurationError
from cl_uap.data.uap_io import load_uap
from cl_uap.evaluation.sweeps import SweepRunner
from cl_uap.manager import ExperimentManager
from cl_uap.membank.bank import load_membank

QUICK_CL = {"K": 3, "steps": 3, "log_every": 0}


def _run(**kwargs) -> int:
    return run(RunConfig(**kwargs))


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    """Synthetic aug, bank and test directories plus a four-row bank."""
    root = tmp_path_factory.mktemp("pipeline")
    for name, seed, n in (("aug", 1, 5), ("bank", 2, 4), ("test", 3, 3)):
        code = _run(command="synth", out_dir=str(root / name), seed=seed, synth={"n": n, "name": name})
        assert code == EXIT_OK
    code = _run(
        command="bank", out_dir=str(root / "bank_run"), bank_size=4, paths={"corpus": str(root / "bank" / "images")}
    )
    assert code == EXIT_OK
    return {
        "root": root,
        "aug": str(root / "aug" / "images"),
        "bank_images": str(root / "bank" / "images"),
        "test": str(root / "test" / "images"),
        "bank": str(root / "bank_run" / "bank.mbk"),
    }


@pytest.fixture(scope="module")
def trained(corpora):
    """A contrastive perturbation trained through the train-cl command."""
    out = corpora["root"] / "cl"
    code = _run(
        command="train-cl",
        out_dir=str(out),
        cl=QUICK_CL,
        paths={"aug_corpus": corpora["aug"], "bank": corpora["bank"], "test_corpus": corpora["test"]},
    )
    assert code == EXIT_OK
    return out


class TestRunConfig:
    """Tests for RunConfig validation and resolution."""

    def test_defaults(self):
        """A bare command resolves every nested config to its defaults."""
        config = RunConfig(command="eval")
        assert config.cl_config().tau == 0.1
        assert config.eval_config().n_images == 100
        assert config.descriptor().variant == "toy"
        assert config.descriptor().device == "cpu"
        assert config.input_shape() == (64, 64, 3)

    def test_seed_overrides_nested_configs(self):
        """The top-level seed replaces the training seeds."""
        config = RunConfig(command="train-cl", seed=7)
        assert config.cl_config().seed == 7
        assert config.baseline_config().seed == 7

    def test_augment_by_name(self):
        """A bare augmentation name gets that kind's defaults."""
        config = RunConfig(command="train-cl", cl={"augment": "cutout"})
        assert config.cl_config().augment.size == (13, 13)

    def test_unknown_keys(self):
        """Unknown top-level and nested keys are rejected."""
        with pytest.raises(ValidationError):
            RunConfig(command="eval", colour="red")
        with pytest.raises(ValidationError):
            RunConfig(command="train-cl", cl={"temperature": 0.1})

    def test_invalid_values(self):
        """Out-of-range nested values are rejected."""
        with pytest.raises(ValidationError):
            RunConfig(command="eval", model={"variant": "resnet"})
        with pytest.raises(ValidationError):
            RunConfig(command="synth", synth={"n": 0})
        with pytest.raises(ValidationError):
            RunConfig(command="fly")

    def test_snapshot_round_trip(self):
        """The snapshot is a complete, loadable configuration."""
        config = RunConfig(command="train-cl", cl={"tau": 0.5}, seed=2)
        snapshot = json.loads(json.dumps(config.snapshot()))
        assert set(snapshot["cl"]) >= {"tau", "K", "augment", "epsilon", "steps", "lr", "seed"}
        reloaded = RunConfig.model_validate(snapshot)
        assert reloaded.cl_config() == config.cl_config()

    def test_out_dir_default(self, temp_dir):
        """Without out_dir the run goes to <runs_dir>/<command>."""
        assert RunConfig(command="bank").resolved_out_dir(temp_dir) == temp_dir / "bank"


class TestConfigLoading:
    """Tests for config files and flag overrides."""

    def test_merge_overrides(self):
        """Dotted keys update nested values; None leaves them alone."""
        merged = merge_overrides({"cl": {"tau": 0.1, "K": 5}}, {"cl.tau": 0.5, "eval.n_images": 3, "seed": None})
        assert merged == {"cl": {"tau": 0.5, "K": 5}, "eval": {"n_images": 3}}

    def test_flags_override_file(self, temp_dir):
        """Command-line values win over the config file."""
        path = temp_dir / "run.json"
        path.write_text(json.dumps({"command": "train-cl", "cl": {"tau": 0.2, "K": 9}}))
        config = load_run_config(path, {"cl.tau": 0.7})
        assert config.cl_config().tau == 0.7
        assert config.cl_config().K == 9

    def test_bad_file(self, temp_dir):
        """Unreadable or invalid files raise ConfigurationError."""
        path = temp_dir / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_run_config(path)
        with pytest.raises(ConfigurationError):
            load_run_config(temp_dir / "missing.json")
        with pytest.raises(ConfigurationError):
            load_run_config(None, {"command": "eval", "eval.n_images": 0})

    def test_parser_overrides(self):
        """Flags map onto dotted RunConfig keys."""
        args = build_parser().parse_args(["train-cl", "--tau", "0.5", "--k", "8", "--aug", "cutout"])
        overrides = overrides_from_args(args)
        assert overrides == {"command": "train-cl", "cl.tau": 0.5, "cl.K": 8, "cl.augment": "cutout"}

    def test_parser_baseline_mode_and_seeds(self):
        """Baseline modes accept short names; sweeps take seed lists."""
        baseline = overrides_from_args(build_parser().parse_args(["train-baseline", "--mode", "agnostic"]))
        assert baseline["baseline.mode"] == "image_agnostic"
        sweep = overrides_from_args(build_parser().parse_args(["sweep", "--seeds", "0,1,2"]))
        assert sweep["sweep.seeds"] == [0, 1, 2]


class TestExperimentManager:
    """Tests for the input guard."""

    def test_missing_inputs(self, temp_dir):
        """A command without its required inputs is refused."""
        manager = ExperimentManager(RunConfig(command="train-cl", out_dir=str(temp_dir / "run")))
        with pytest.raises(ConfigurationError, match="aug_corpus"):
            manager.guard()

    def test_optional_path_must_exist(self, temp_dir):
        """A given but nonexistent optional path is refused like a missing input."""
        config = RunConfig(
            command="eval",
            noise=True,
            paths={"test_corpus": str(temp_dir), "aug_corpus": str(temp_dir / "nope")},
        )
        with pytest.raises(ConfigurationError, match="aug_corpus"):
            ExperimentManager(config).guard()

    def test_training_identities(self, corpora):
        """Training-side directories and bank sources are collected by role."""
        config = RunConfig(command="eval", noise=True, paths={"aug_corpus": corpora["aug"], "bank": corpora["bank"]})
        identities = ExperimentManager(config).training_identities()
        assert set(identities) == {"aug_corpus", "bank"}
        assert len(identities["aug_corpus"]) == 5
        assert len(identities["bank"]) == 4


@pytest.mark.integration
class TestPipeline:
    """End-to-end runs of the command handlers."""

    def test_bank_artefacts(self, corpora):
        """The bank command writes a loadable bank and its summary."""
        bank = load_membank(corpora["bank"])
        assert bank.M == 4
        summary = json.loads((corpora["root"] / "bank_run" / "bank.json").read_text())
        assert summary["checksum"] == bank.checksum()

    def test_train_cl_artefacts(self, trained):
        """train-cl writes the perturbation, loss trace, snapshot and run log."""
        uap = load_uap(trained / "uap.uap")
        assert uap.within_budget()
        assert uap.meta["method"] == "cl"
        assert json.loads(uap.meta["train_identities"])
        with open(trained / "loss.csv", "r", encoding="utf-8") as f:
            assert len(list(csv.reader(f))) == QUICK_CL["steps"] + 1
        assert (trained / "config.json").exists()
        assert (trained / "run.log").read_text()

    def test_eval_writes_report(self, corpora, trained):
        """eval on held-out images writes report.csv and summary.json."""
        out = corpora["root"] / "eval"
        code = _run(
            command="eval",
            out_dir=str(out),
            eval={"n_images": 3},
            paths={
                "uap": str(trained / "uap.uap"),
                "test_corpus": corpora["test"],
                "aug_corpus": corpora["aug"],
                "bank": corpora["bank"],
            },
        )
        assert code == EXIT_OK
        with open(out / "report.csv", "r", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 3
        summary = json.loads((out / "summary.json").read_text())
        assert 0.0 <= summary["miou"] <= 100.0

    def test_eval_refuses_training_images(self, corpora, trained):
        """Evaluating on the augmentation corpus fails and writes nothing."""
        out = corpora["root"] / "eval-overlap"
        code = _run(
            command="eval",
            out_dir=str(out),
            paths={"uap": str(trained / "uap.uap"), "test_corpus": corpora["aug"]},
        )
        assert code == EXIT_TOOLKIT_ERROR
        assert not out.exists()

    def test_eval_refuses_bank_images(self, corpora):
        """Bank source images cannot serve as test images."""
        out = corpora["root"] / "eval-bank-overlap"
        code = _run(
            command="eval",
            out_dir=str(out),
            noise=True,
            paths={"test_corpus": corpora["bank_images"], "bank": corpora["bank"]},
        )
        assert code == EXIT_TOOLKIT_ERROR
        assert not out.exists()

    def test_noise_control(self, corpora):
        """eval --noise needs no perturbation file."""
        out = corpora["root"] / "noise"
        code = _run(command="eval", out_dir=str(out), noise=True, eval={"n_images": 2}, paths={"test_corpus": corpora["test"]})
        assert code == EXIT_OK
        assert json.loads((out / "summary.json").read_text())["uap_meta"]["method"] == "uniform_noise"

    def test_missing_input_writes_nothing(self, corpora):
        """A run refused for missing inputs leaves no directory."""
        out = corpora["root"] / "no-bank"
        code = _run(command="train-cl", out_dir=str(out), paths={"aug_corpus": corpora["aug"]})
        assert code == EXIT_TOOLKIT_ERROR
        assert not out.exists()

    def test_missing_test_corpus_refused(self, corpora):
        """A test corpus path that does not exist cannot pass the overlap check."""
        out = corpora["root"] / "ghost-test"
        code = _run(
            command="train-cl",
            out_dir=str(out),
            cl=QUICK_CL,
            paths={
                "aug_corpus": corpora["aug"],
                "bank": corpora["bank"],
                "test_corpus": str(corpora["root"] / "does-not-exist"),
            },
        )
        assert code == EXIT_TOOLKIT_ERROR
        assert not out.exists()

    def test_snapshot_reproduces_run(self, corpora, trained):
        """Re-running from config.json gives a byte-identical perturbation."""
        snapshot = json.loads((trained / "config.json").read_text())
        snapshot["out_dir"] = str(corpora["root"] / "cl-again")
        assert run(RunConfig.model_validate(snapshot)) == EXIT_OK
        assert (corpora["root"] / "cl-again" / "uap.uap").read_bytes() == (trained / "uap.uap").read_bytes()

    def test_sweep_table(self, corpora):
        """A three-setting sweep writes a three-row table."""
        out = corpora["root"] / "sweep"
        code = _run(
            command="sweep",
            out_dir=str(out),
            cl={"K": 3, "steps": 2, "log_every": 0},
            eval={"n_images": 2},
            sweep={"kind": "temperature", "grid": "0.05,0.1,0.5"},
            paths={"aug_corpus": corpora["aug"], "bank": corpora["bank"], "test_corpus": corpora["test"]},
        )
        assert code == EXIT_OK
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "setting,miou_percent"
        assert len(lines) == 4

    def test_sweep_partial_failure(self, mocker, corpora):
        """Failed sweep cells give exit status 3."""
        mocker.patch.object(SweepRunner, "_run_cell", side_effect=RuntimeError("boom"))
        code = _run(
            command="sweep",
            out_dir=str(corpora["root"] / "sweep-fail"),
            sweep={"kind": "negatives", "grid": "1,2"},
            paths={"aug_corpus": corpora["aug"], "bank": corpora["bank"], "test_corpus": corpora["test"]},
        )
        assert code == EXIT_PARTIAL

    def test_baseline_dependent(self, corpora):
        """The image-dependent baseline records its image but no identities."""
        out = corpora["root"] / "dependent"
        code = _run(
            command="train-baseline",
            out_dir=str(out),
            baseline={"steps": 3, "log_every": 0},
            paths={"train_corpus": corpora["aug"]},
        )
        assert code == EXIT_OK
        uap = load_uap(out / "uap.uap")
        assert uap.meta["train_image"] == "aug-1-0000.png"
        assert "train_identities" not in uap.meta

    def test_baseline_agnostic(self, corpora):
        """The image-agnostic baseline records its training identities."""
        out = corpora["root"] / "agnostic"
        code = _run(
            command="train-baseline",
            out_dir=str(out),
            baseline={"mode": "image_agnostic", "steps": 3, "log_every": 0},
            paths={"train_corpus": corpora["aug"], "test_corpus": corpora["test"]},
        )
        assert code == EXIT_OK
        assert len(json.loads(load_uap(out / "uap.uap").meta["train_identities"])) == 5

    def test_baseline_image_out_of_range(self, corpora):
        """An image index past the corpus is a configuration error."""
        code = _run(
            command="train-baseline",
            out_dir=str(corpora["root"] / "dependent-bad"),
            baseline_image=50,
            baseline={"steps": 1},
            paths={"train_corpus": corpora["aug"]},
        )
        assert code == EXIT_TOOLKIT_ERROR

    def test_analyze(self, corpora, trained):
        """analyze writes the four similarities."""
        out = corpora["root"] / "analyze"
        code = _run(
            command="analyze",
            out_dir=str(out),
            analyze={"draws": 3},
            paths={"uap": str(trained / "uap.uap"), "corpus": corpora["test"]},
        )
        assert code == EXIT_OK
        report = json.loads((out / "analysis.json").read_text())
        assert set(report) == {"positive", "negative", "adv_clean", "random", "draws"}

    def test_overlay(self, corpora, trained):
        """overlay writes one panel per image and prompt."""
        out = corpora["root"] / "overlay"
        code = _run(
            command="overlay",
            out_dir=str(out),
            overlay={"n_images": 2},
            paths={"uap": str(trained / "uap.uap"), "images": corpora["test"]},
        )
        assert code == EXIT_OK
        assert len(list((out / "overlays").glob("*.png"))) == 2

    def test_unexpected_error(self, mocker, temp_dir):
        """Exceptions outside the toolkit hierarchy give exit status 1."""
        mocker.patch.dict(COMMAND_HANDLERS, {"synth": mocker.Mock(side_effect=RuntimeError("boom"))})
        assert _run(command="synth", out_dir=str(temp_dir / "synth")) == EXIT_FAILURE

    def test_main_entry_point(self, mocker, temp_dir):
        """main parses flags and runs the command."""
        mocker.patch("cl_uap.cli.main.setup_logging")
        out = temp_dir / "synth"
        assert main(["synth", "--out", str(out), "--n", "2", "--seed", "4"]) == EXIT_OK
        assert sorted(p.name for p in (out / "images").iterdir()) == ["synthetic-4-0000.png", "synthetic-4-0001.png"]
        snapshot = json.loads((out / "config.json").read_text())
        assert snapshot["seed"] == 4

    def test_main_invalid_config(self, mocker, temp_dir):
        """An invalid configuration gives exit status 2."""
        mocker.patch("cl_uap.cli.main.setup_logging")
        assert main(["synth", "--out", str(temp_dir / "x"), "--n", "0"]) == EXIT_TOOLKIT_ERROR
