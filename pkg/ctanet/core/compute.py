"""Job dispatch for the command line.

A job is a program dict: ``program_name`` picks a primitive from
``program_map`` and the other entries are its keyword arguments. Arguments are
checked against the primitive's signature before anything runs, so a typo in
a job never starts a half-finished training run.
"""
import inspect
import logging
from typing import Any, Callable, Dict, List

import ctanet.core as core
from ctanet.core.errors import ContractError


logger = logging.getLogger(__name__)

program_map: Dict[str, Callable[..., Any]] = {
    "generate": core.generate_dataset,
    "train": core.train_model,
    "evaluate": core.model_evaluator,
    "ablate": core.run_ablation,
    "explain": core.explain_video,
}


def check_arguments(program_name: str, params: Dict[str, Any]) -> None:
    """Raise ContractError naming unknown or missing keyword arguments of a primitive."""
    signature = inspect.signature(program_map[program_name])
    accepted = set(signature.parameters)
    required: List[str] = [
        name for name, p in signature.parameters.items()
        if p.default is inspect.Parameter.empty and p.kind in (p.POSITIONAL_OR_KEYWORD, p.KEYWORD_ONLY)
    ]
    unknown = sorted(set(params) - accepted)
    missing = [name for name in required if name not in params]
    if unknown or missing:
        problems = []
        if unknown:
            problems.append(f"unknown argument(s) {', '.join(unknown)}")
        if missing:
            problems.append(f"missing argument(s) {', '.join(missing)}")
        raise ContractError(f"{program_name} job: {'; '.join(problems)}")


class ComputeWorkflow:
    """Runs one ctanet job: generate, train, evaluate, ablate or explain.

    Parameters
    ----------
    program : Dict
        ``program_name`` plus the keyword arguments of the primitive it names.

    Examples
    --------
    >>> program = {
    ...     'program_name': 'generate',
    ...     'out_dir': 'data/dataset',
    ...     'seed': 7,
    ... }
    >>> workflow = ComputeWorkflow(program)
    """

    def __init__(self, program: Dict) -> None:
        self.program: Dict = program

    def execute(self) -> Any:
        """Validate the job's arguments and run its primitive.

        Returns
        -------
        Any
            Whatever the primitive returns: a dataset directory for
            ``generate``, the best checkpoint path for ``train``, the metrics
            dict for ``evaluate``, the table paths for ``ablate`` and the map
            paths for ``explain``.

        Raises
        ------
        ValueError
            If 'program_name' is missing or not in the program map.
        ContractError
            If the arguments do not fit the primitive's signature.
        """
        if 'program_name' not in self.program:
            raise ValueError("program_name not found in program")
        program_name: str = self.program['program_name']
        params: Dict = {key: value for key, value in self.program.items() if key != 'program_name'}
        if program_name not in program_map:
            raise ValueError(f"{program_name} not in available programs {sorted(program_map)}")
        check_arguments(program_name, params)
        logger.debug(f"running {program_name} with {sorted(params)}")
        return program_map[program_name](**params)
