"""Statistical automatic post-editing for machine translation output.

Learns error-correction rules from (source, MT output, human post-edit)
triplets and applies them to new MT output, in batch and online modes, with
constrained decoding driven by translation-quality annotations.
"""

from .align import WordAligner, ibm1_train, levenshtein_align, symmetrize, viterbi_align
from .corpus import Triplet, augment_identity, build_joint, load_corpus
from .decoder import AnnotatedInput, FeatureWeights, decode, decode_constrained
from .lm import NGramLanguageModel
from .metrics import bleu, hter, precision, repetition_rate, ter
from .online import DynamicKB, OnlineEngine, SimilarityIndex
from .optimize import rerank, tune
from .pipeline import ApePostEditor, OnlineApePostEditor
from .qe import (activate, guidance_annotate, oracle_word_labels, select_sentence,
                 select_word)
from .tm import PhraseTable, compute_dense_features, estimate_reordering, \
    estimate_translation, extract_phrases, merge_counts, prune

__version__ = "0.1.0"

__all__ = [
    "ApePostEditor",
    "OnlineApePostEditor",
    "AnnotatedInput",
    "DynamicKB",
    "FeatureWeights",
    "NGramLanguageModel",
    "OnlineEngine",
    "PhraseTable",
    "SimilarityIndex",
    "Triplet",
    "WordAligner",
    "activate",
    "augment_identity",
    "bleu",
    "build_joint",
    "compute_dense_features",
    "decode",
    "decode_constrained",
    "estimate_reordering",
    "estimate_translation",
    "extract_phrases",
    "guidance_annotate",
    "hter",
    "ibm1_train",
    "levenshtein_align",
    "load_corpus",
    "merge_counts",
    "oracle_word_labels",
    "precision",
    "prune",
    "rerank",
    "repetition_rate",
    "select_sentence",
    "select_word",
    "symmetrize",
    "ter",
    "tune",
    "viterbi_align",
]
