# Core package: channel model, metrics, precoder and relay design, campaigns
