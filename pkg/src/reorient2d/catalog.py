"""Procedural object catalog: randomized rectangular assets.

Mobility (the quasi-static "inverse mass") is scaled by inverse area, then
capped so the settle iteration stays contractive: the stiffest force term is
the friction smoothing with slope mu * f / tangential_eps, so the update gain
mobility * n_contacts * mu * f_deep / eps must stay below 1 even at the
deepest legal penetration.
"""

from __future__ import annotations

import numpy as np

from .geometry import make_box
from .sim import DEFAULT_SIM_PARAMS, ObjectAsset, SimParams

REF_AREA = 0.20  # m^2, reference rectangle (0.4 x 0.5)

# sampling ranges for the rectangle sides and friction coefficient
WIDTH_RANGE = (0.2, 0.6)
HEIGHT_RANGE = (0.3, 0.8)
MU_RANGE = (0.3, 1.2)

_STABILITY_FACTOR = 0.6
_EFFECTIVE_CONTACTS = 3


def _deep_force(params: SimParams) -> float:
    """Normal force at the penetration cap, the stiffest operating point."""
    x = params.penetration_cap / params.rho
    return params.kappa * params.rho * float(np.log1p(np.exp(-abs(x))) + max(x, 0.0))


def mobility_for(width: float, height: float, mu: float,
                 params: SimParams = DEFAULT_SIM_PARAMS) -> tuple:
    """(mobility_trans, mobility_rot) for a rectangle: inverse-area scaled,
    capped for settle-loop stability."""
    area = width * height
    f_deep = _deep_force(params)
    slope = _EFFECTIVE_CONTACTS * mu * f_deep / params.tangential_eps
    mt_cap = _STABILITY_FACTOR / slope
    r_max_sq = 0.25 * (width * width + height * height)  # farthest-corner lever arm
    mr_cap = _STABILITY_FACTOR / (slope * r_max_sq)
    scale = min(1.0, REF_AREA / area)
    return mt_cap * scale, mr_cap * scale


def make_asset(width: float, height: float, mu: float,
               params: SimParams = DEFAULT_SIM_PARAMS) -> ObjectAsset:
    mt, mr = mobility_for(width, height, mu, params)
    return ObjectAsset(make_box(width, height), mobility_trans=mt, mobility_rot=mr, friction_mu=mu)


def generate_catalog(n_assets: int = 2000, seed: int = 0,
                     params: SimParams = DEFAULT_SIM_PARAMS) -> list:
    """Seeded catalog of randomized rectangular assets."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCA7A]))
    assets = []
    for _ in range(n_assets):
        w = rng.uniform(*WIDTH_RANGE)
        h = rng.uniform(*HEIGHT_RANGE)
        mu = rng.uniform(*MU_RANGE)
        assets.append(make_asset(w, h, mu, params))
    return assets


def asset_spec(asset: ObjectAsset) -> dict:
    """JSON-ready description (rectangle sides recovered from the vertices)."""
    v = asset.shape.vertices
    return {
        "width": float(v[:, 0].max() - v[:, 0].min()),
        "height": float(v[:, 1].max() - v[:, 1].min()),
        "friction_mu": asset.friction_mu,
        "mobility_trans": asset.mobility_trans,
        "mobility_rot": asset.mobility_rot,
    }


def asset_from_spec(spec: dict) -> ObjectAsset:
    return ObjectAsset(
        make_box(spec["width"], spec["height"]),
        mobility_trans=spec["mobility_trans"],
        mobility_rot=spec["mobility_rot"],
        friction_mu=spec["friction_mu"],
    )
