import os
import datetime

import numpy as np
from torch.utils.tensorboard import SummaryWriter


class Logger(object):
    def __init__(self, log_dir, log_hist=True):
        """Create a summary writer logging to log_dir."""
        print("Logger init")
        if log_hist:    # Check a new folder for each log should be created
            log_dir = os.path.join(
                log_dir,
                datetime.datetime.now().strftime("%Y_%m_%d__%H_%M_%S"))
        self.log_dir = log_dir
        self.writer = SummaryWriter(log_dir)

    def list_of_scalars_summary(self, tag_value_pairs, step):
        """Log scalar variables."""
        for tag, value in tag_value_pairs:
            self.writer.add_scalar(tag, value, step)

    def trial_summary(self, name, trial, delta, flops, success):
        """Per-trial error norm, apply flops and outcome of an experiment."""
        self.list_of_scalars_summary([
            (f"{name}/delta", delta),
            (f"{name}/log10_delta", np.log10(max(delta, 1e-300))),
            (f"{name}/flops", flops),
            (f"{name}/success", float(success)),
        ], trial)

    def close(self):
        self.writer.flush()
        self.writer.close()
