from .simulator import (LambdaNotConverged, ModProbabilities, PayloadTooLarge,
                        max_entropy, payload_entropy, simulate_embedding,
                        solve_lambda, ternary_probs)
from .stc import (MessageTooLong, StcError, StcInfeasible, StcParams,
                  embed_segments, stc_embed, stc_extract, syndrome)

__all__ = [
    "LambdaNotConverged", "ModProbabilities", "PayloadTooLarge", "max_entropy",
    "payload_entropy", "simulate_embedding", "solve_lambda", "ternary_probs",
    "MessageTooLong", "StcError", "StcInfeasible", "StcParams", "embed_segments",
    "stc_embed", "stc_extract", "syndrome",
]
