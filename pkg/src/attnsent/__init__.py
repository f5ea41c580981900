"""attnsent: attention-weighted sentence embeddings.

Per-word attention weights come from surprisal under an n-gram Kneser-Ney
language model, from POS/CCG tag vectors trained jointly with the word
embeddings, or from tf-idf; sentence vectors are attention-weighted sums of
word vectors. Includes trainers for an adjacent-sentence cross-entropy
objective and a paraphrase max-margin objective, plus an evaluation harness
for semantic textual similarity and reading-time correlation.
"""

__version__ = "0.1.0"
