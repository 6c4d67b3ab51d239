# Experiment suites, configuration and runner
