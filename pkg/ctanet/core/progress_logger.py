import logging


logger = logging.getLogger("progress_logger")

JOB_TYPES = ('generate', 'training', 'evaluation', 'ablation', 'explain')


def log_progress(job_type: str, progress: int, message: str) -> None:
    """Log progress of a long-running job.

    Parameters
    ----------
    job_type : str
        Type of job being tracked, one of ``JOB_TYPES``.
    progress : int
        Progress of the job as a percentage (0-100).
    message : str
        Message to be logged along with the progress.

    Raises
    ------
    AssertionError
        If progress is not between 0 and 100 inclusive.
    """
    assert 0 <= progress <= 100
    if job_type not in JOB_TYPES:
        logger.debug(f"unregistered job type '{job_type}'")
    logger.info(f"{job_type}: {progress}% - {message}")
