#include "wsiseg/bridge.hpp"

namespace wsiseg {

// Generated by tools/fit_heuristic; regenerate tests/data/heuristic_golden.json with it.
const HeuristicModel& shipped_heuristic_model() {
    static const HeuristicModel model{
        "phantom-fit-1",
        {2.8896847190084216, -32.411393598280625, 57.142453956093497, 63.722144785034885, 1580.3574115330837, 24.480826121306674},
        -37.355525456493012,
    };
    return model;
}

}  // namespace wsiseg
