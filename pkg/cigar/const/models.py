"""
    This file is part of cigar.


    Defines indices for the ranking models supported by the re-ranking
    stage. Hashing models (HashRec, BPR-B) share the code-based scoring
    contract, the rest score from real-valued parameters.

"""


""" Ranker kinds. """
BPR_MF = 1
CML = 2
NEUMF = 3
POP = 4
BPR_B = 5

""" Kinds trained by stochastic optimization. """
TRAINABLE = (BPR_MF, CML, NEUMF)

""" Kinds whose scores come from binary codes. """
HASHING = (BPR_B,)

""" Parameters updated with sparse (row-wise) semantics. """
EMBEDDINGS = ('user_emb', 'item_emb', 'user_mlp', 'item_mlp')

""" Adam defaults. """
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
