"""glyphforge: a desk-scale lab for text-centric image editing.

Subpackages: flow_core (rectified-flow training), nft_rl (contrastive policy
optimization), reward_engine (judged rewards), glyph_layout (glyph priors),
html_pipeline (structured edit-pair factory), edit_verify_retry
(unstructured orchestrator), bench_harness (benchmark + stats), cli.
"""

__version__ = "0.1.0"
