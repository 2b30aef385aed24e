#include "microcurl/cli_io.hpp"

int main(int argc, char** argv)
{
    microcurl::configure_threads();
    return microcurl::run_command(argc, argv);
}
