"""Regenerate the bundled example model files under src/instab/configs/."""
from pathlib import Path

from instab.model import satellite, save_model, scalar, table1_setting

OUT = Path(__file__).resolve().parents[1] / "src" / "instab" / "configs"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for k in range(1, 7):
        save_model(table1_setting(k), OUT / f"table1_setting{k}.json")
    save_model(satellite(1.0, label="satellite-zeta1"), OUT / "satellite_zeta1.json")
    save_model(satellite(0.1, label="satellite-zeta0.1"), OUT / "satellite_zeta0.1.json")
    save_model(scalar(1.5, 1.0, 0.0, 1.0, label="scalar-closed-loop-benchmark"), OUT / "scalar_benchmark.json")
    for p in sorted(OUT.glob("*.json")):
        print(p.name)


if __name__ == "__main__":
    main()
