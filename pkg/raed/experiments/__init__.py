from raed.experiments.grid import GridCell, GridReport, run_grid

__all__ = ["GridCell", "GridReport", "run_grid"]
