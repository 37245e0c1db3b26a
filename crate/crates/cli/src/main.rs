use std::process::exit;

fn main() {
    // Die quietly when stdout is closed early (e.g. piped into `head`)
    // instead of panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    exit(transferop_cli::run_cli(std::env::args_os()));
}
