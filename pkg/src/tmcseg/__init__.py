"""Semi-supervised triplet Markov chain models for sequential labeling.

Trains three generative model families (d-mTMC, VSL, SVRNN) on partially
labeled 1-D sequences via Monte-Carlo variational inference, and decodes the
missing labels. Includes the full binary-image pipeline: Hilbert-curve
serialization, synthetic noise, masking, training, decoding and scoring.
"""

__version__ = "0.1.0"
