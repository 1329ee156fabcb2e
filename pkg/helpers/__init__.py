# helpers — small utilities shared by the training loop
