"""Dataset generation, training, grasp selection and evaluation."""
