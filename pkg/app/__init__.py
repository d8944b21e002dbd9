# MIMO relay joint design simulator
