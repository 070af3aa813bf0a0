// placeholder during bring-up; replaced by the CLI runner implementation
