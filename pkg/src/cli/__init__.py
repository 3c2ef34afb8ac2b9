"""df-lab command-line front end."""
