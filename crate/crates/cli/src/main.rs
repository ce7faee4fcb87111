fn main() {
    std::process::exit(rlab::run());
}
