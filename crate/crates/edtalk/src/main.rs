fn main() {
    std::process::exit(edtalk::run());
}
