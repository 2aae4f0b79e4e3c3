from typing import Any, Dict, List

from common.constants import APP_NAME, APP_TAGLINE, APP_VERSION, CSV_COLUMNS, Color


def _format_value(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


class Reporter:
    """Terminal summaries of a run."""

    PREVIEW_ROWS = 12

    def __init__(self, config):
        self.config = config

    def show_header(self) -> None:
        if self.config.quiet:
            return
        print("\n" + "=" * 70)
        print(" " + f"{APP_NAME} v{APP_VERSION}".center(68))
        print(" " + APP_TAGLINE.center(68))
        print("=" * 70)
        print(f" Scenario:   {self.config.scenario.value}")
        print(f" Session:    {self.config.session_id}")
        print(f" Config:     {self.config.config_path or '(defaults)'}")
        print(f" Output:     {self.config.out_dir}")
        print(f" Threads:    {self.config.threads}")
        print("-" * 70, flush=True)

    def show_result(self, result) -> None:
        """Summary block, a preview of the grid rows and the artifact list."""
        if self.config.quiet:
            return
        print("\n" + "=" * 70)
        print(" " + f"{result.scenario.value.upper()} SUMMARY".center(68))
        print("=" * 70)
        self._print_summary(result.summary)
        if result.rows:
            print("-" * 70)
            self._print_rows(CSV_COLUMNS[result.scenario], result.rows)
        print("-" * 70)
        print(" Artifacts:")
        for name in sorted(result.artifacts):
            print(f"   {name}")
        print(f" Wall time: {result.wall_time:.1f}s")
        print("=" * 70)
        print(f"{Color.GREEN}[OK] Done{Color.RESET}\n", flush=True)

    def _print_summary(self, summary: Dict, indent: int = 1) -> None:
        for key, value in summary.items():
            if isinstance(value, dict):
                # CRB bounds and the system description are long; the manifest has them
                if key in ("crb", "system"):
                    continue
                print(" " * indent + f"{key}:")
                self._print_summary(value, indent + 2)
            else:
                print(" " * indent + f"{key + ':':<32}{_format_value(value)}")

    def _print_rows(self, columns: List[str], rows: List[Dict]) -> None:
        width = max(10, min(16, 68 // len(columns)))
        print(" " + "".join(f"{c:>{width}}" for c in columns))
        for row in rows[:self.PREVIEW_ROWS]:
            print(" " + "".join(f"{_format_value(row.get(c))[:width - 1]:>{width}}" for c in columns))
        if len(rows) > self.PREVIEW_ROWS:
            print(f" ... {len(rows) - self.PREVIEW_ROWS} more rows in the CSV")
