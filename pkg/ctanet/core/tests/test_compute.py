import logging
import os

import pytest

from ctanet.core.compute import ComputeWorkflow, program_map
from ctanet.core.errors import ContractError
from ctanet.core.progress_logger import log_progress
from ctanet.utils import parse_boolean_none_values_from_kwargs, run_job


def test_program_map_covers_commands():
    """Every command has a primitive."""
    assert set(program_map) == {'generate', 'train', 'evaluate', 'ablate', 'explain'}


def test_workflow_rejects_bad_programs():
    """A missing or unknown program name is a ValueError."""
    with pytest.raises(ValueError, match='program_name not found'):
        ComputeWorkflow({'out_dir': 'x'}).execute()
    with pytest.raises(ValueError, match='not in available programs'):
        ComputeWorkflow({'program_name': 'dock'}).execute()


def test_run_job_generate(tmp_path, tiny_spec):
    """run_job dispatches keyword arguments to the primitive."""
    out = run_job({'program_name': 'generate', 'out_dir': str(tmp_path / 'data'), 'spec': tiny_spec})
    assert out == str(tmp_path / 'data')
    assert os.path.isfile(tmp_path / 'data' / 'index.csv')


def test_run_job_logs_failures(caplog):
    """Errors from a job are logged and re-raised."""
    with caplog.at_level(logging.ERROR, logger='ctanet.utils'):
        with pytest.raises(ContractError, match=r'unknown argument\(s\) no_such_argument'):
            run_job({'program_name': 'generate', 'out_dir': 'x', 'no_such_argument': 1})
    assert 'Error executing workflow' in caplog.text


def test_workflow_checks_required_arguments(tmp_path):
    """A job missing a required argument fails before the primitive runs."""
    with pytest.raises(ContractError, match=r'missing argument\(s\) out_dir, run_config'):
        ComputeWorkflow({'program_name': 'train', 'data_dir': str(tmp_path)}).execute()
    assert not os.listdir(tmp_path)


def test_parse_boolean_none_values():
    """true/false/none strings become Python values; everything else is untouched."""
    parsed = parse_boolean_none_values_from_kwargs({'a': 'True', 'b': 'false', 'c': 'None', 'd': '3', 'e': 4})
    assert parsed == {'a': True, 'b': False, 'c': None, 'd': '3', 'e': 4}


def test_log_progress(caplog):
    """Progress lines carry the job type and percentage; out-of-range values assert."""
    with caplog.at_level(logging.INFO, logger='progress_logger'):
        log_progress('training', 40, 'epoch 2/5')
    assert 'training: 40% - epoch 2/5' in caplog.text
    with pytest.raises(AssertionError):
        log_progress('training', 101, 'too far')
