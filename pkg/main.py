import sys
import os
import argparse
import traceback
import warnings

# Ensure local imports work
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from common.constants import (
    APP_DESCRIPTION,
    APP_NAME,
    APP_VERSION,
    EXIT_CONFIG_ERROR,
    EXIT_FAILURE,
    EXIT_INTERRUPTED,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    Color,
    Scenario,
)
from common.errors import ConfigError, NumericalError

from config.settings import Config
from core.engine import Engine
from ui.reporter import Reporter
from utils.logger import close_logger, setup_logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steady",
        description=f"{APP_NAME} v{APP_VERSION}: {APP_DESCRIPTION}",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument("scenario", choices=[s.value for s in Scenario], help="Scenario to run")
    parser.add_argument("--config", help="JSON configuration file (see config/templates/)")
    parser.add_argument("--out", help="Output directory (default: runs/<scenario>_<timestamp>)")
    parser.add_argument("--seed", type=int, help="Override the dataset seed (data.seed)")
    parser.add_argument("--threads", type=int, help="Worker threads (fallback: STEADY_THREADS)")
    parser.add_argument("--full-scale", action="store_true",
                        help="Keep P and S above the desk budget instead of capping them")
    parser.add_argument("--quiet", action="store_true", help="Suppress terminal output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    engine = None
    logger = None
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            config = Config(args)
        logger = setup_logger(config.session_id)
        logger.info(f"Initializing {APP_NAME} v{APP_VERSION} [Session: {config.session_id}]")
        logger.info(f"Scenario: {config.scenario.value} | Config: {config.config_path} | Threads: {config.threads}")
        for warning in caught:
            logger.warning(str(warning.message))
            if not config.quiet:
                print(f"{Color.YELLOW}[!] {warning.message}{Color.RESET}", flush=True)

        reporter = Reporter(config)
        reporter.show_header()
        engine = Engine(config)
        result = engine.run()
        reporter.show_result(result)
        return EXIT_OK

    except ConfigError as e:
        print(f"\n{Color.RED}[CONFIG ERROR] {e}{Color.RESET}", file=sys.stderr)
        if logger:
            logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except NumericalError as e:
        print(f"\n{Color.RED}[NUMERICAL FAILURE] {e}{Color.RESET}", file=sys.stderr)
        if logger:
            logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL_FAILURE
    except ValueError as e:
        # DimensionError and range checks raised past config loading
        print(f"\n{Color.RED}[INVALID INPUT] {e}{Color.RESET}", file=sys.stderr)
        if logger:
            logger.error(f"Invalid input: {e}")
        return EXIT_CONFIG_ERROR
    except KeyboardInterrupt:
        print("\n[!] User Force Exit - Cleaning up...", file=sys.stderr)
        if logger:
            logger.info("User interrupted")
        return EXIT_INTERRUPTED
    except Exception as e:
        print(f"\n[CRITICAL ERROR] {e}", file=sys.stderr)
        traceback.print_exc()
        if logger:
            logger.exception("Unhandled error")
        return EXIT_FAILURE
    finally:
        # Ensure cleanup happens regardless of exit reason
        if engine is not None and engine.executor is not None:
            try:
                engine.executor.shutdown(wait=False, cancel_futures=True)
            except Exception as cleanup_error:
                print(f"[!] Cleanup error: {cleanup_error}", file=sys.stderr)
        close_logger()


if __name__ == "__main__":
    sys.exit(main())
