"""Online radiance-field training from streamed posed images."""
