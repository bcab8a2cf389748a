from songemo.harness.pipeline import (HarnessError, RunConfig, cmd_evaluate, cmd_extract, cmd_pca,
                                      cmd_predict, cmd_reproduce, cmd_train)

__all__ = ["HarnessError", "RunConfig", "cmd_evaluate", "cmd_extract", "cmd_pca", "cmd_predict",
           "cmd_reproduce", "cmd_train"]
