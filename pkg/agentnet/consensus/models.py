from fractions import Fraction

from confmodel import Config
from confmodel import fields


class ConsensusPolicy(Config):
    """
    When a layer's answers count as consistent enough to stop early
    """

    MODE_EXACT = "exact"
    MODE_BLEU = "bleu"
    MODE_CHOICES = (MODE_EXACT, MODE_BLEU)

    mode = fields.ConfigText("How answers are compared: exact or bleu", default=MODE_EXACT)
    bleu_threshold = fields.ConfigFloat("Minimum BLEU for two answers to be consistent", default=0.9)
    quorum = fields.ConfigText("Fraction of active agents the largest class must reach", default="2/3")
    earliest_stop_step = fields.ConfigInt("First step at which a run may stop early", default=1)
    enabled = fields.ConfigBool("Whether early stopping is enabled at all", default=True)

    def post_validate(self):
        if self.mode not in self.MODE_CHOICES:
            self.raise_config_error("mode must be one of %s" % ", ".join(self.MODE_CHOICES))
        if not 0 < self.bleu_threshold <= 1:
            self.raise_config_error("bleu_threshold must be in (0, 1]")
        if self.earliest_stop_step < 1:
            self.raise_config_error("earliest_stop_step must be at least 1")

        try:
            fraction = Fraction(str(self.quorum))
        except (ValueError, ZeroDivisionError):
            self.raise_config_error("quorum must be a fraction like 2/3")
        else:
            if not 0 < fraction <= 1:
                self.raise_config_error("quorum must be in (0, 1]")

    @property
    def quorum_fraction(self):
        return Fraction(str(self.quorum))

    def to_json(self):
        return {
            "mode": self.mode,
            "bleu_threshold": self.bleu_threshold,
            "quorum": str(self.quorum_fraction),
            "earliest_stop_step": self.earliest_stop_step,
            "enabled": self.enabled,
        }
