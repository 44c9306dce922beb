#include <iostream>
using namespace std;

void report_sign(int value) {
    if (value > 0) {
        cout << "positive" << endl;
    } else if (value < 0) {
        cout << "negative" << endl;
    } else {
        cout << "zero" << endl;
    }
}

int main() {
    int value;
    cin >> value;
    report_sign(value);
    return 0;
}
