// The autodiff tape grows and is freed once per task; glibc's heap trimming
// then returns and re-faults those pages on every task.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    std::process::exit(graspmeta::cli::main_with(std::env::args_os()));
}
