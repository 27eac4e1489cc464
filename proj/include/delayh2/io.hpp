#pragma once

// Model, report and CSV files.
//
// JSON is written canonically: object keys sorted, doubles as %.17g. A
// quad-precision value that does not fit a double exactly is written as the
// string "#q:<36 significant digits>"; readers accept either form anywhere a
// number is expected.

#include <optional>
#include <string>
#include <vector>

#include "delayh2/delay_opt.hpp"
#include "delayh2/iodirka.hpp"
#include "delayh2/lti.hpp"

namespace delayh2::io {

/// Contents of a model file. State-space files keep their realization so
/// that saving reproduces them; `model` is always the pole/residue form.
struct ModelDocument {
    std::optional<StateSpaceModel> state_space;
    DelayedModel model;
};

ModelDocument parse_model(const std::string& text);
ModelDocument load_model(const std::string& path);

std::string model_json(const ModelDocument& doc);
std::string model_json(const DelayedModel& m);

/// Residual families and their maxima.
std::string residuals_json(const OptimalityResiduals& r);

std::string report_json(const ReductionReport& rep);

/// Gap and residuals of a candidate against g.
std::string analysis_json(const GapValue& gap, const OptimalityResiduals& r);

struct NamedResponse {
    std::string name;
    ImpulseResponse response;
};

/// Header `t,y[m][l]...` for a single model. With several models each
/// column is named after its model, plus `[m][l]` when the model is not
/// SISO. Values %.12e. All responses must share one time grid.
std::string impulse_csv(const std::vector<NamedResponse>& responses);

/// Columns tau_1..tau_k,gamma_1..gamma_k,objective.
std::string landscape_csv(const std::vector<LandscapeSample>& samples);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// %.17g and %.12e.
std::string format_json_double(double x);
std::string format_csv_double(double x);

}  // namespace delayh2::io
