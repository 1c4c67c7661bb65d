use std::process::exit;

fn main() {
    exit(phonokg::cli::dispatch(std::env::args()));
}
