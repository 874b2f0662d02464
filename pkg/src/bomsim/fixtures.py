"""Synthetic two-site human reference data.

The bundled CSVs are produced by noisy-categorical agents that follow the
behavioral policy tables. Site B draws from the same tables with spreads
widened by 10% and different seeds, so the two sites disagree by a small,
nonzero amount and give a usable human-to-human baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .agents.policies import HUMAN_POLICIES, scaled_policy
from .core import EXPERIMENT_IDS, ResponseDataset, run_experiment, transcripts_to_dataset
from .experiments import CATEGORY_MAPS, NoisyFactory, make_spec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Site:
    name: str
    seed: int
    salt: int
    sd_factor: float

    @property
    def source(self) -> str:
        return f"human:{self.name}"

    @property
    def filename(self) -> str:
        return f"human_{self.name}.csv"


SITES = (Site("siteA", 101, 7001, 1.0), Site("siteB", 202, 7002, 1.1))


def generate_site(site: Site, preset: str = "paper", experiments: tuple[str, ...] = EXPERIMENT_IDS) -> ResponseDataset:
    policies = {k: scaled_policy(v, site.sd_factor) for k, v in HUMAN_POLICIES.items()}
    factory = NoisyFactory(policies=policies, seed_salt=site.salt)
    ds = ResponseDataset()
    for exp in experiments:
        spec = make_spec(exp, preset, seed=site.seed)
        ds.extend(transcripts_to_dataset(run_experiment(spec, factory), CATEGORY_MAPS[exp], site.source).rows)
    return ds


def fixture_path(site: Site | str) -> Path:
    name = site.filename if isinstance(site, Site) else f"human_{site}.csv"
    return Path(str(resources.files("bomsim") / "data" / name))


def load_site(site: Site | str) -> ResponseDataset:
    return ResponseDataset.from_csv(fixture_path(site))


def load_human_fixtures() -> ResponseDataset:
    ds = ResponseDataset()
    for site in SITES:
        ds.extend(load_site(site).rows)
    return ds


def write_fixtures(directory: str | Path | None = None) -> list[Path]:
    out_dir = Path(directory) if directory is not None else fixture_path(SITES[0]).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for site in SITES:
        path = out_dir / site.filename
        generate_site(site).to_csv(path)
        log.info("wrote %s", path)
        paths.append(path)
    return paths


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    write_fixtures()
