"""Pricing and simulation toolkit for the Bachelier market model with a
simple-interest riskless account.

Closed-form call prices and hedges, additive and classical binomial tree
engines, factor-driven path-dependent pricing, Brownian path machinery
(local time, skew combinations, invariance-principle walks), and ESG price
adjustment, behind a reproducible seeded Monte Carlo layer and a CLI.
"""

__version__ = "0.1.0"

from .errors import (
    ArbitrageError,
    DegenerateMarketError,
    EstimationError,
    InputError,
    MaturityError,
    ToolkitError,
    TreeSizeError,
    UnidentifiableError,
)
from .esg import (
    EsgAffinity,
    EsgRecord,
    esg_adjusted_price,
    exp_transform,
    geo_transform,
    implied_affinity,
    record_at,
    relative_score,
    transformed_relative_score,
    year_fraction,
)
from .model import (
    AbmParams,
    MarketPriceOfRisk,
    ParamPath,
    SiaParams,
    VanillaCall,
    bachelier_call_sia,
    bachelier_call_zero_rate,
    bachelier_hedge,
    call_payoff,
    implied_simple_rate,
    implied_simple_rate_path,
    market_price_of_risk,
    norm_cdf,
    norm_pdf,
    radon_nikodym_weight,
)
from .pathdep import (
    FactorModelParams,
    PathDepAssetParams,
    PiecewiseFn,
    csyip_pair,
    estimate_factor_sign_probs,
    factor_tree_path,
    pathdep_asset_path,
    pathdep_price,
    strip_factor_signs,
)
from .simulate import (
    AbsorbedPathSpec,
    BrownianDecomposition,
    SkewTriplet,
    brownian_decompose,
    brownian_paths,
    combine_skew_paths,
    gsbm_path,
    horizontal_vertical_walk,
    ito_mckean_sbm,
    simulate_abm,
    simulate_absorbed,
    simulate_gbm,
    time_grid,
    z_gamma_path,
)
from .trees import (
    BachelierTreeSpec,
    ClassicalTreeSpec,
    RnMode,
    TreePath,
    TreeValuation,
    bachelier_price,
    bachelier_price_enumerated,
    bachelier_rn_prob,
    bachelier_updown,
    classical_price,
    classical_price_enumerated,
    classical_rn_prob,
    classical_updown,
    tree_to_cadlag_path,
)

__all__ = [name for name in dir() if not name.startswith("_")]
