"""Binary-histogram PEHT vs ABHT on the bundled 8-feature table.

Features are min-max scaled on the training split and the target is
z-scored, so MSEs are in units of the target variance.

Run with ``python demos/tabular.py``.
"""

from importlib.resources import files

from htboost.evaluation import ExperimentConfig, run_experiment


def main():
    cfg = ExperimentConfig(
        case=None,
        data_path=str(files("htboost") / "data" / "tabular_demo.csv"),
        region_column="region",
        methods=("PEHT", "ABHT"),
        depth_grid=(4, 6, 8),
        initial_depth=4,
        max_stages=3,
        repetitions=3,
    )
    res = run_experiment(cfg)
    print(res.table())
    for row in res.raw:
        if row["region"] == "all":
            print(f"rep {row['repetition']} {row['method']}: test {row['mse']:.4f} val {row['val_mse']:.4f} {row['params']}")


if __name__ == "__main__":
    main()
