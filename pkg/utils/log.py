import logging

# Set up logging
logging.basicConfig(level="INFO", format="%(levelname)s %(name)s: %(message)s")
logger = logging.getLogger("chemokin")


def set_verbosity(verbose: bool) -> None:
    """DEBUG shows per-step detail from the stepper and the oracle."""
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.INFO)


__all__ = ["logger", "set_verbosity"]
